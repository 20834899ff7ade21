use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use vizsynth_core::compile::render_json;
use vizsynth_core::decompile::decompile as decompile_elements;
use vizsynth_core::grammar::ExampleElement;
use vizsynth_core::lang::parse;
use vizsynth_core::pipeline::{run, ConfigOverrides};
use vizsynth_core::synth::SearchConfig;
use vizsynth_core::{eval, load_csv, Table};
use vizsynth_service::{parse_budgets, ServiceConfig};

use crate::SearchFlags;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("no candidates found")]
    NoCandidates,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Invalid(_) => 2,
            CliError::NoCandidates => 3,
        }
    }
}

fn invalid(e: impl ToString) -> CliError {
    CliError::Invalid(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_table(path: &Path) -> Result<Table, CliError> {
    let bytes = read(path)?;
    load_csv(&bytes, true).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    input: PathBuf,
    elements: Vec<ExampleElement>,
    #[serde(default)]
    config: ConfigOverrides,
}

/// Task config over the defaults, then command-line flags over that.
pub fn search_config(base: &SearchConfig, flags: &SearchFlags) -> Result<SearchConfig, CliError> {
    let mut cfg = base.clone();
    if flags.seedless {
        cfg.worker_budgets_ms = vec![None];
    }
    if let Some(d) = flags.max_depth {
        cfg.max_depth = d;
    }
    if let Some(n) = flags.max_candidates {
        cfg.max_candidates = n;
    }
    if let Some(b) = &flags.budgets_ms {
        cfg.worker_budgets_ms = parse_budgets("--budgets-ms", b).map_err(invalid)?;
    }
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

pub fn synth(task_path: &Path, out: &Path, flags: &SearchFlags) -> Result<(), CliError> {
    let bytes = read(task_path)?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let task: TaskFile = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| invalid(format!("task file at `{}`: {}", e.path(), e.inner())))?;
    let dir = task_path.parent().unwrap_or(Path::new("."));
    let input = load_table(&dir.join(&task.input))?;
    let cfg = search_config(&task.config.apply(&SearchConfig::default()), flags)?;

    let output = run(&input, &task.elements, &cfg).map_err(invalid)?;
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut programs = String::new();
    for (k, c) in output.candidates.iter().enumerate() {
        write(&out.join(format!("candidate_{}.vl.json", k + 1)), &c.vegalite_text())?;
        programs.push_str(&c.program_texts().join("\t"));
        programs.push('\n');
    }
    write(&out.join("programs.txt"), &programs)?;
    let response = output.response();
    let stats = json!({
        "candidates": output.candidates.len(),
        "reason": response.reason,
        "stats": response.stats,
    });
    write(&out.join("stats.json"), &render_json(&stats))?;
    log::info!(
        "{} candidates written to {}",
        output.candidates.len(),
        out.display()
    );
    if output.candidates.is_empty() {
        return Err(CliError::NoCandidates);
    }
    Ok(())
}

pub fn eval_program(input: &Path, program: &str) -> Result<(), CliError> {
    let table = load_table(input)?;
    let prog = parse(program).map_err(invalid)?;
    let out = eval(&prog, &table).map_err(invalid)?;
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(out.to_csv().as_bytes())
        .map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })
}

pub fn decompile(elements: &str) -> Result<(), CliError> {
    let text = if elements.trim_start().starts_with('[') {
        elements.to_string()
    } else {
        let bytes = read(Path::new(elements))?;
        String::from_utf8(bytes).map_err(invalid)?
    };
    let elements: Vec<ExampleElement> = serde_json::from_str(&text).map_err(invalid)?;
    let sketches = decompile_elements(&elements).map_err(invalid)?;
    let doc = serde_json::to_value(&sketches).map_err(invalid)?;
    print!("{}", render_json(&doc));
    Ok(())
}

pub fn serve(port: Option<u16>, flags: &SearchFlags) -> Result<(), CliError> {
    let mut cfg = ServiceConfig::from_env().map_err(invalid)?;
    if let Some(p) = port {
        cfg.port = p;
    }
    cfg.search = search_config(&cfg.search, flags)?;
    let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
        path: PathBuf::from("<runtime>"),
        source,
    })?;
    rt.block_on(vizsynth_service::serve(cfg))
        .map_err(|source| CliError::Io {
            path: PathBuf::from("<listener>"),
            source,
        })
}
