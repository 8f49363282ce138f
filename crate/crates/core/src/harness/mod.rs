//! Configuration, dispatch and persistence for the command-line runs.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::*;
pub use config::{RunConfig, SweepConfig, Tolerances};
pub use output::{content_digest, FileEntry, Output, RunManifest, StageVerdict, MANIFEST};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Eigen,
    Robin,
    Modulus,
    Flow,
    VerifyGap,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Robin => "robin",
            Command::Modulus => "modulus",
            Command::Flow => "flow",
            Command::VerifyGap => "verify-gap",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// Set when a stage aborted the run.
    pub error: Option<Error>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Validates, runs and writes the manifest. Files written before a stage
/// failure are kept and listed.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = now();
    let mut out = Output::create(&cfg.output_dir)?;
    let result = match cmd {
        Command::Eigen => cmd_eigen(cfg, &mut out),
        Command::Robin => cmd_robin(cfg, &mut out),
        Command::Modulus => cmd_modulus(cfg, &mut out),
        Command::Flow => cmd_flow(cfg, &mut out),
        Command::VerifyGap => cmd_verify_gap(cfg, &mut out),
        Command::Sweep => cmd_sweep(cfg, &mut out),
    };
    let (verdicts, error) = match result {
        Ok(v) => (v, None),
        Err(e) => {
            let stage = match &e {
                Error::Stage { stage, .. } => stage.clone(),
                _ => cmd.name().to_string(),
            };
            (vec![StageVerdict::new(stage, false, e.to_string())], Some(e))
        }
    };
    let exit_code = if error.is_some() {
        EXIT_STAGE
    } else if verdicts.iter().all(|v| v.passed) {
        EXIT_OK
    } else {
        EXIT_VERDICT
    };
    let files = out.scan()?;
    let manifest = RunManifest {
        command: cmd.name().into(),
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        started,
        finished: now(),
        verdicts,
        certified_tolerances: out.tolerances.clone(),
        content_digest: content_digest(&files),
        files,
        exit_code,
    };
    out.write_json(MANIFEST, &manifest)?;
    Ok(RunOutcome { manifest, error })
}

/// Exit status for a config or I/O error raised before any stage ran.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::DiameterOutOfRange(_) | Error::InvalidProblem(_) | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_STAGE,
    }
}
