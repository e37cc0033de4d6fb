//! Adapter for a solver running as a separate process.
//!
//! The command template is run through `sh -c` after substituting `{mps}`
//! (model file written by [`export_mps`]), `{sol}` (solution file the
//! process must write) and `{time}` (time limit in whole seconds, 0 when
//! unlimited).
//!
//! Solution file: the first non-blank line is `objective <int>`,
//! `infeasible` or `timeout`. After `objective` come `name value` lines;
//! columns that are not listed take the value 0. Values may be written as
//! floats but must round to integers within 1e-6.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::mps::export_mps;
use super::{validate, MilpModel, SolveError, SolveResult, SolveStatus};

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("external solver not configured: {0}")]
    Config(String),
    #[error("i/o error around the external solver: {0}")]
    Io(#[from] std::io::Error),
    #[error("external solver exited with {code:?}: {stderr}")]
    Process { code: Option<i32>, stderr: String },
    #[error("solution file line {line}: {message}")]
    Output { line: usize, message: String },
    #[error("external solver wrote no solution; infeasible and timed-out runs cannot be told apart")]
    NoSolution,
    #[error("external solution rejected: {0}")]
    Rejected(#[from] SolveError),
}

pub fn external_solve(
    model: &MilpModel,
    command_template: &str,
    time_limit: Option<Duration>,
) -> Result<SolveResult, ExternalError> {
    if command_template.trim().is_empty() {
        return Err(ExternalError::Config("empty command template".into()));
    }
    if !command_template.contains("{mps}") || !command_template.contains("{sol}") {
        return Err(ExternalError::Config("command template needs {mps} and {sol} placeholders".into()));
    }
    let dir = tempfile::tempdir()?;
    let mps = dir.path().join("model.mps");
    let sol = dir.path().join("model.sol");
    std::fs::write(&mps, export_mps(model))?;
    let command = command_template
        .replace("{mps}", &mps.display().to_string())
        .replace("{sol}", &sol.display().to_string())
        .replace("{time}", &time_limit.map_or(0, |t| t.as_secs().max(1)).to_string());
    log::debug!("running external solver: {command}");
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()?;
    let deadline = time_limit.map(|t| Instant::now() + t + Duration::from_secs(5));
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            child.kill()?;
            child.wait()?;
            return Ok(SolveResult {
                status: SolveStatus::Timeout,
                assignment: Vec::new(),
                objective: None,
                bound: None,
                nodes: 0,
            });
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let stderr = {
        use std::io::Read;
        let mut s = String::new();
        if let Some(mut e) = child.stderr.take() {
            e.read_to_string(&mut s)?;
        }
        s
    };
    match status.code() {
        Some(0) => {}
        Some(126 | 127) => return Err(ExternalError::Config(format!("cannot run `{command}`: {}", stderr.trim()))),
        code => return Err(ExternalError::Process { code, stderr: stderr.trim().to_string() }),
    }
    read_solution(model, &sol)
}

/// Parses a solution file and re-checks it against the model.
pub fn read_solution(model: &MilpModel, path: &Path) -> Result<SolveResult, ExternalError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ExternalError::NoSolution),
        Err(e) => return Err(e.into()),
    };
    parse_solution(model, &text)
}

pub fn parse_solution(model: &MilpModel, text: &str) -> Result<SolveResult, ExternalError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((first_no, first)) = lines.next() else { return Err(ExternalError::NoSolution) };
    let toks: Vec<&str> = first.split_whitespace().collect();
    let empty = |status| SolveResult { status, assignment: Vec::new(), objective: None, bound: None, nodes: 0 };
    let claimed = match toks[..] {
        ["infeasible"] => return Ok(empty(SolveStatus::Infeasible)),
        ["timeout"] => return Ok(empty(SolveStatus::Timeout)),
        ["objective", v] => parse_value(v, first_no + 1)?,
        _ => {
            return Err(ExternalError::Output {
                line: first_no + 1,
                message: "expected `objective <int>`, `infeasible` or `timeout`".into(),
            })
        }
    };
    let mut x = vec![0i64; model.columns().len()];
    for (no, line) in lines {
        let [name, v] = line.split_whitespace().collect::<Vec<_>>()[..] else {
            return Err(ExternalError::Output { line: no + 1, message: "expected `name value`".into() });
        };
        let Some(c) = model.col_id(name) else {
            return Err(ExternalError::Output { line: no + 1, message: format!("unknown column `{name}`") });
        };
        x[c.0] = parse_value(v, no + 1)?;
    }
    validate(model, &x, claimed)?;
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        assignment: x,
        objective: Some(claimed),
        bound: Some(claimed),
        nodes: 0,
    })
}

fn parse_value(tok: &str, line: usize) -> Result<i64, ExternalError> {
    if let Ok(v) = tok.parse::<i64>() {
        return Ok(v);
    }
    let f: f64 =
        tok.parse().map_err(|_| ExternalError::Output { line, message: format!("`{tok}` is not a number") })?;
    let r = f.round();
    if (f - r).abs() > 1e-6 || r.abs() > 9.0e15 {
        return Err(ExternalError::Output { line, message: format!("`{tok}` is not integral") });
    }
    Ok(r as i64)
}

#[cfg(test)]
mod tests {
    use super::super::{MilpModel, Sense};
    use super::*;

    fn identity() -> MilpModel {
        let mut m = MilpModel::new("id");
        let x = m.add_column("x", 0, None, 1).unwrap();
        m.add_row("c", Sense::Ge, 3, [(x, 1)]).unwrap();
        m
    }

    #[test]
    fn parses_and_validates() {
        let r = parse_solution(&identity(), "objective 3\nx 3.0000000001\n").unwrap();
        assert_eq!(r.objective, Some(3));
        assert!(matches!(parse_solution(&identity(), "objective 2\nx 2\n"), Err(ExternalError::Rejected(_))));
        assert!(matches!(parse_solution(&identity(), "objective 4\nx 3\n"), Err(ExternalError::Rejected(_))));
        assert_eq!(parse_solution(&identity(), "infeasible\n").unwrap().status, SolveStatus::Infeasible);
        assert!(matches!(parse_solution(&identity(), "\n"), Err(ExternalError::NoSolution)));
        assert!(matches!(
            parse_solution(&identity(), "objective 3\ny 3\n"),
            Err(ExternalError::Output { line: 2, .. })
        ));
    }

    #[test]
    fn shell_solver_round_trip() {
        let r = external_solve(&identity(), "printf 'objective 3\\nx 3\\n' > {sol}; test -s {mps}", None).unwrap();
        assert_eq!(r.objective, Some(3));
    }

    #[test]
    fn missing_executable_is_configuration_error() {
        let e = external_solve(&identity(), "definitely-not-a-solver-xyz {mps} {sol}", None).unwrap_err();
        assert!(matches!(e, ExternalError::Config(_)), "{e}");
        assert!(matches!(external_solve(&identity(), "", None), Err(ExternalError::Config(_))));
    }

    #[test]
    fn silent_solver_is_ambiguous() {
        assert!(matches!(external_solve(&identity(), "true {mps} {sol}", None), Err(ExternalError::NoSolution)));
        assert!(matches!(
            external_solve(&identity(), "exit 3; {mps} {sol}", None),
            Err(ExternalError::Process { code: Some(3), .. })
        ));
    }
}
