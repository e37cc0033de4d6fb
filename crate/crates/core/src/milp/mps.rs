//! MPS text for pure-integer minimisation models.
//!
//! Output uses the fixed-format field layout (names padded to eight
//! characters, values right-aligned) but names may be longer, so the reader
//! splits on whitespace like a free-format reader. Every column sits inside a
//! single `INTORG`/`INTEND` marker pair and every bound is written
//! explicitly, including `PL` for columns without an upper bound.

use std::fmt::Write as _;

use thiserror::Error;

use super::{ColId, MilpModel, ModelError, Sense};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MpsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unsupported MPS feature: {feature}")]
    Unsupported { line: usize, feature: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

const MARKER: &str = "'MARKER'";

fn objective_name(model: &MilpModel) -> String {
    let mut name = String::from("obj");
    while model.row_by_name(&name).is_some() {
        name.push('_');
    }
    name
}

fn entry(out: &mut String, col: &str, row: &str, value: i64) {
    let _ = writeln!(out, "    {col:<8}  {row:<8}  {value:>12}");
}

pub fn export_mps(model: &MilpModel) -> String {
    let mut out = String::new();
    let name: String = model.name().chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    out.push_str(format!("NAME          {name}").trim_end());
    out.push('\n');
    let obj = objective_name(model);
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {obj}");
    for row in model.rows() {
        let kind = match row.sense {
            Sense::Le => 'L',
            Sense::Eq => 'E',
            Sense::Ge => 'G',
        };
        let _ = writeln!(out, " {kind}  {}", row.name);
    }

    let mut by_col: Vec<Vec<(usize, i64)>> = vec![Vec::new(); model.columns().len()];
    for (r, row) in model.rows().iter().enumerate() {
        for &(c, a) in &row.coeffs {
            by_col[c.0].push((r, a));
        }
    }
    out.push_str("COLUMNS\n");
    if !model.columns().is_empty() {
        let _ = writeln!(out, "    MARKER    {MARKER}                 'INTORG'");
        for (col, entries) in model.columns().iter().zip(&by_col) {
            if col.cost != 0 || entries.is_empty() {
                entry(&mut out, &col.name, &obj, col.cost);
            }
            for &(r, a) in entries {
                entry(&mut out, &col.name, &model.rows()[r].name, a);
            }
        }
        let _ = writeln!(out, "    MARKER    {MARKER}                 'INTEND'");
    }

    out.push_str("RHS\n");
    for row in model.rows().iter().filter(|r| r.rhs != 0) {
        entry(&mut out, "RHS", &row.name, row.rhs);
    }

    out.push_str("BOUNDS\n");
    for col in model.columns() {
        let n = &col.name;
        match col.ub {
            Some(1) if col.lb == 0 => {
                let _ = writeln!(out, " BV BND       {n}");
            }
            Some(u) if u == col.lb => {
                let _ = writeln!(out, " FX BND       {n:<8}  {u:>12}");
            }
            ub => {
                if col.lb != 0 {
                    let _ = writeln!(out, " LO BND       {n:<8}  {:>12}", col.lb);
                }
                match ub {
                    Some(u) => {
                        let _ = writeln!(out, " UP BND       {n:<8}  {u:>12}");
                    }
                    None => {
                        let _ = writeln!(out, " PL BND       {n}");
                    }
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Start,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Objsense,
    End,
}

struct PendingCol {
    name: String,
    lb: i64,
    ub: Option<i64>,
    cost: i64,
}

fn parse_int(tok: &str, line: usize) -> Result<i64, MpsError> {
    if let Ok(v) = tok.parse::<i64>() {
        return Ok(v);
    }
    match tok.parse::<f64>() {
        Ok(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Ok(f as i64),
        Ok(_) => Err(MpsError::Unsupported { line, feature: format!("non-integer value {tok}") }),
        Err(_) => Err(MpsError::Parse { line, message: format!("expected a number, found `{tok}`") }),
    }
}

/// Reads MPS text into a model. Continuous columns, `RANGES`, maximisation
/// and fractional numbers are reported as unsupported.
pub fn import_mps(text: &str) -> Result<MilpModel, MpsError> {
    let mut section = Section::Start;
    let mut name = String::new();
    let mut obj_row: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_pos: std::collections::HashMap<String, usize> = Default::default();
    let mut coeffs: Vec<Vec<(usize, i64)>> = Vec::new();
    let mut rhs: Vec<i64> = Vec::new();
    let mut cols: Vec<PendingCol> = Vec::new();
    let mut col_pos: std::collections::HashMap<String, usize> = Default::default();
    let mut integer = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(char::is_whitespace) {
            section = match toks[0] {
                "NAME" => {
                    name = toks.get(1..).map(|t| t.join("_")).unwrap_or_default();
                    Section::Start
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                "OBJSENSE" => match toks.get(1) {
                    None => Section::Objsense,
                    Some(&("MIN" | "MINIMIZE")) => Section::Start,
                    Some(_) => return Err(MpsError::Unsupported { line, feature: "maximisation".into() }),
                },
                "RANGES" | "SOS" | "QUADOBJ" | "QMATRIX" | "QSECTION" | "QCMATRIX" | "INDICATORS" => {
                    return Err(MpsError::Unsupported { line, feature: format!("{} section", toks[0]) })
                }
                other => return Err(MpsError::Parse { line, message: format!("unknown section `{other}`") }),
            };
            continue;
        }
        let bad = |message: &str| MpsError::Parse { line, message: message.to_string() };
        match section {
            Section::Start | Section::End => return Err(bad("data line outside a section")),
            Section::Objsense => match toks[0] {
                "MIN" | "MINIMIZE" => {}
                _ => return Err(MpsError::Unsupported { line, feature: "maximisation".into() }),
            },
            Section::Rows => {
                let [kind, rname] = toks[..] else { return Err(bad("ROWS entry needs a type and a name")) };
                let sense = match kind {
                    "N" => {
                        if obj_row.is_some() {
                            return Err(MpsError::Unsupported { line, feature: "several objective rows".into() });
                        }
                        obj_row = Some(rname.to_string());
                        continue;
                    }
                    "L" => Sense::Le,
                    "E" => Sense::Eq,
                    "G" => Sense::Ge,
                    _ => return Err(bad(&format!("unknown row type `{kind}`"))),
                };
                if row_pos.insert(rname.to_string(), rows.len()).is_some() {
                    return Err(bad(&format!("duplicate row `{rname}`")));
                }
                rows.push((rname.to_string(), sense));
                coeffs.push(Vec::new());
                rhs.push(0);
            }
            Section::Columns => {
                if toks.get(1) == Some(&MARKER) {
                    match toks.get(2).copied() {
                        Some("'INTORG'") => integer = true,
                        Some("'INTEND'") => integer = false,
                        _ => return Err(bad("unknown marker")),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(bad("COLUMNS entry needs a column and one or two row/value pairs"));
                }
                let cname = toks[0];
                let c = match col_pos.get(cname) {
                    Some(&c) => c,
                    None => {
                        if !integer {
                            return Err(MpsError::Unsupported { line, feature: format!("continuous column {cname}") });
                        }
                        col_pos.insert(cname.to_string(), cols.len());
                        cols.push(PendingCol { name: cname.to_string(), lb: 0, ub: None, cost: 0 });
                        cols.len() - 1
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let v = parse_int(pair[1], line)?;
                    if obj_row.as_deref() == Some(pair[0]) {
                        cols[c].cost += v;
                    } else if let Some(&r) = row_pos.get(pair[0]) {
                        coeffs[r].push((c, v));
                    } else {
                        return Err(bad(&format!("unknown row `{}`", pair[0])));
                    }
                }
            }
            Section::Rhs => {
                let pairs = if toks.len() % 2 == 1 { &toks[1..] } else { &toks[..] };
                if pairs.is_empty() {
                    return Err(bad("RHS entry needs a row and a value"));
                }
                for pair in pairs.chunks(2) {
                    let v = parse_int(pair[1], line)?;
                    if obj_row.as_deref() == Some(pair[0]) {
                        return Err(MpsError::Unsupported { line, feature: "objective constant".into() });
                    }
                    let Some(&r) = row_pos.get(pair[0]) else {
                        return Err(bad(&format!("unknown row `{}`", pair[0])));
                    };
                    rhs[r] = v;
                }
            }
            Section::Bounds => {
                let kind = toks[0];
                let valued = matches!(kind, "UP" | "LO" | "FX" | "LI" | "UI");
                let (cname, value) = match (valued, toks.len()) {
                    (true, 4) => (toks[2], Some(parse_int(toks[3], line)?)),
                    (true, 3) => (toks[1], Some(parse_int(toks[2], line)?)),
                    (false, 3) => (toks[2], None),
                    (false, 4) if kind == "BV" => (toks[2], None),
                    (false, 2) => (toks[1], None),
                    _ => return Err(bad("malformed BOUNDS entry")),
                };
                let Some(&c) = col_pos.get(cname) else {
                    return Err(bad(&format!("unknown column `{cname}`")));
                };
                let col = &mut cols[c];
                match (kind, value) {
                    ("UP" | "UI", Some(v)) => col.ub = Some(v),
                    ("LO" | "LI", Some(v)) => col.lb = v,
                    ("FX", Some(v)) => {
                        col.lb = v;
                        col.ub = Some(v);
                    }
                    ("BV", _) => {
                        col.lb = 0;
                        col.ub = Some(1);
                    }
                    ("PL", _) => col.ub = None,
                    ("MI" | "FR", _) => {
                        return Err(MpsError::Unsupported {
                            line,
                            feature: "column without a finite lower bound".into(),
                        })
                    }
                    _ => return Err(bad(&format!("unknown bound type `{kind}`"))),
                }
            }
        }
    }
    if section != Section::End {
        return Err(MpsError::Parse { line: text.lines().count(), message: "missing ENDATA".into() });
    }
    let mut model = MilpModel::new(&name);
    for c in cols {
        model.add_column(&c.name, c.lb, c.ub, c.cost)?;
    }
    for (((rname, sense), terms), b) in rows.into_iter().zip(coeffs).zip(rhs) {
        model.add_row(&rname, sense, b, terms.into_iter().map(|(c, a)| (ColId(c), a)))?;
    }
    Ok(model)
}
