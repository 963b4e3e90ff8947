//! Runs several scenario files concurrently, each into its own output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{exit, CliError};
use crate::runner::{run_scenario, write_outputs, RunOptions};
use crate::scenario::{parse_scenario, ConfigError, ScenarioConfig};

#[derive(Debug)]
pub struct FileResult {
    pub path: PathBuf,
    pub name: Option<String>,
    pub outcome: Result<(bool, String), CliError>,
}

impl FileResult {
    pub fn exit_code(&self) -> i32 {
        match &self.outcome {
            Ok((true, _)) => exit::SUCCESS,
            Ok((false, _)) => exit::VERIFICATION_FAILED,
            Err(e) => e.exit_code(),
        }
    }
}

/// Reads and validates a scenario file.
pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(parse_scenario(&text)?)
}

fn run_one(config: &ScenarioConfig, out: Option<&Path>, options: RunOptions) -> Result<(bool, String), CliError> {
    let outcome = run_scenario(config, options)?;
    if let Some(base) = out {
        write_outputs(config, &outcome, &base.join(config.name()))?;
    }
    Ok((outcome.pass(), outcome.report.summary()))
}

/// Runs every file on its own thread. With `out`, artifacts go to `out/<scenario name>/`.
pub fn run_files(paths: &[PathBuf], out: Option<&Path>, options: RunOptions) -> Vec<FileResult> {
    let loaded: Vec<Result<ScenarioConfig, CliError>> = paths.iter().map(|p| load(p)).collect();
    let mut owners: BTreeMap<String, usize> = BTreeMap::new();
    let mut duplicate = vec![false; paths.len()];
    for (i, cfg) in loaded.iter().enumerate() {
        if let Ok(cfg) = cfg {
            if owners.insert(cfg.name().to_string(), i).is_some() {
                duplicate[i] = true;
            }
        }
    }
    let joined: Vec<Option<Result<(bool, String), CliError>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = loaded
            .iter()
            .zip(&duplicate)
            .map(|(cfg, &dup)| {
                scope.spawn(move || match cfg {
                    Err(_) => None,
                    Ok(cfg) if dup => Some(Err(CliError::Config(ConfigError::Invalid {
                        path: "name".into(),
                        message: format!("`{}` is used by another scenario in this batch", cfg.name()),
                    }))),
                    Ok(cfg) => Some(run_one(cfg, out, options)),
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    joined
        .into_iter()
        .zip(loaded)
        .zip(paths)
        .map(|((result, cfg), path)| {
            let name = cfg.as_ref().ok().map(|c| c.name().to_string());
            let outcome = match (result, cfg) {
                (Some(result), _) => result,
                (None, Err(e)) => Err(e),
                (None, Ok(_)) => unreachable!("valid configs always run"),
            };
            FileResult { path: path.clone(), name, outcome }
        })
        .collect()
}

/// The most severe exit code of a batch.
pub fn batch_exit_code(results: &[FileResult]) -> i32 {
    results.iter().map(FileResult::exit_code).max().unwrap_or(exit::SUCCESS)
}
