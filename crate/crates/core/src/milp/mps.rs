//! Reader for the MPS subset used by small MIPLIB-style files: NAME, ROWS,
//! COLUMNS (with integer MARKER blocks), RHS, RANGES, BOUNDS, OBJSENSE and
//! ENDATA. Fields are split on whitespace, so names must not contain spaces.

use std::collections::HashMap;

use super::{MilpError, MilpInstance, ObjSense, Row, RowSense};

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Name,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
}

#[derive(Clone, Copy, PartialEq)]
enum RowType {
    Objective,
    Free,
    Le,
    Ge,
    Eq,
}

struct Builder {
    name: String,
    sense: ObjSense,
    row_index: HashMap<String, usize>,
    row_types: Vec<RowType>,
    row_names: Vec<String>,
    row_coeffs: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    range: Vec<Option<f64>>,
    col_index: HashMap<String, usize>,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    integer: Vec<bool>,
    objective_row: Option<usize>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> MilpError {
    MilpError::ParseError {
        line,
        reason: reason.into(),
    }
}

fn number(tok: &str, line: usize) -> Result<f64, MilpError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("expected a number, got '{tok}'")))
}

impl Builder {
    fn column(&mut self, name: &str, integer: bool) -> usize {
        if let Some(&j) = self.col_index.get(name) {
            return j;
        }
        let j = self.objective.len();
        self.col_index.insert(name.to_string(), j);
        self.objective.push(0.0);
        self.lower.push(0.0);
        self.upper.push(f64::INFINITY);
        self.integer.push(integer);
        j
    }

    fn set_coeff(&mut self, col: usize, row: &str, val: f64, line: usize) -> Result<(), MilpError> {
        let &i = self
            .row_index
            .get(row)
            .ok_or_else(|| parse_err(line, format!("unknown row '{row}'")))?;
        match self.row_types[i] {
            RowType::Objective => self.objective[col] += val,
            RowType::Free => {}
            _ => {
                if self.row_coeffs[i].iter().any(|&(j, _)| j == col) {
                    return Err(parse_err(line, format!("duplicate entry for row '{row}'")));
                }
                self.row_coeffs[i].push((col, val));
            }
        }
        Ok(())
    }
}

/// Parses an MPS document into an (unnormalized) instance.
pub fn read_mps(text: &str) -> Result<MilpInstance, MilpError> {
    let mut b = Builder {
        name: String::from("mps"),
        sense: ObjSense::Minimize,
        row_index: HashMap::new(),
        row_types: Vec::new(),
        row_names: Vec::new(),
        row_coeffs: Vec::new(),
        rhs: Vec::new(),
        range: Vec::new(),
        col_index: HashMap::new(),
        objective: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        integer: Vec::new(),
        objective_row: None,
    };
    let mut section = Section::None;
    let mut in_int_block = false;
    let mut saw_end = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let header = !raw.starts_with(' ') && !raw.starts_with('\t');
        if header {
            let key = toks[0].to_ascii_uppercase();
            section = match key.as_str() {
                "NAME" => {
                    if let Some(n) = toks.get(1) {
                        b.name = n.to_string();
                    }
                    Section::Name
                }
                "OBJSENSE" => {
                    if let Some(s) = toks.get(1) {
                        b.sense = parse_sense(s, line)?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => {
                    saw_end = true;
                    break;
                }
                "SOS" | "QUADOBJ" | "QMATRIX" | "QSECTION" | "QCMATRIX" | "INDICATORS"
                | "GENCONS" | "PWLOBJ" | "CSECTION" => {
                    return Err(MilpError::UnsupportedMpsFeature(key));
                }
                _ => return Err(parse_err(line, format!("unknown section '{}'", toks[0]))),
            };
            continue;
        }

        match section {
            Section::None | Section::Name => {
                return Err(parse_err(line, "data line outside of a section"));
            }
            Section::ObjSense => b.sense = parse_sense(toks[0], line)?,
            Section::Rows => {
                if toks.len() < 2 {
                    return Err(parse_err(line, "ROWS entry needs a type and a name"));
                }
                let ty = match toks[0].to_ascii_uppercase().as_str() {
                    "N" => {
                        if b.objective_row.is_none() {
                            b.objective_row = Some(b.row_types.len());
                            RowType::Objective
                        } else {
                            RowType::Free
                        }
                    }
                    "L" => RowType::Le,
                    "G" => RowType::Ge,
                    "E" => RowType::Eq,
                    other => return Err(parse_err(line, format!("unknown row type '{other}'"))),
                };
                let name = toks[1].to_string();
                if b.row_index.contains_key(&name) {
                    return Err(parse_err(line, format!("duplicate row '{name}'")));
                }
                b.row_index.insert(name.clone(), b.row_types.len());
                b.row_types.push(ty);
                b.row_names.push(name);
                b.row_coeffs.push(Vec::new());
                b.rhs.push(0.0);
                b.range.push(None);
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1].trim_matches('\'').eq_ignore_ascii_case("MARKER") {
                    match toks[2].trim_matches('\'').to_ascii_uppercase().as_str() {
                        "INTORG" => in_int_block = true,
                        "INTEND" => in_int_block = false,
                        other => return Err(parse_err(line, format!("unknown marker '{other}'"))),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(parse_err(
                        line,
                        "COLUMNS entry needs 1 or 2 (row, value) pairs",
                    ));
                }
                let col = b.column(toks[0], in_int_block);
                for pair in toks[1..].chunks(2) {
                    let v = number(pair[1], line)?;
                    b.set_coeff(col, pair[0], v, line)?;
                }
            }
            Section::Rhs | Section::Ranges => {
                // The set name is optional in free MPS; an odd count means it is present.
                let body = if toks.len() % 2 == 1 {
                    &toks[1..]
                } else {
                    &toks[..]
                };
                if body.is_empty() {
                    return Err(parse_err(line, "missing (row, value) pair"));
                }
                for pair in body.chunks(2) {
                    if pair.len() != 2 {
                        return Err(parse_err(line, "dangling row name"));
                    }
                    let v = number(pair[1], line)?;
                    let &i = b
                        .row_index
                        .get(pair[0])
                        .ok_or_else(|| parse_err(line, format!("unknown row '{}'", pair[0])))?;
                    if section == Section::Rhs {
                        if b.row_types[i] == RowType::Objective {
                            log::warn!("ignoring objective constant {v} on line {line}");
                        } else {
                            b.rhs[i] = v;
                        }
                    } else {
                        b.range[i] = Some(v);
                    }
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(parse_err(line, "BOUNDS entry too short"));
                }
                let kind = toks[0].to_ascii_uppercase();
                let needs_value = !matches!(kind.as_str(), "FR" | "MI" | "PL" | "BV");
                // type [set] column [value]
                let (col_name, value) = if needs_value {
                    let v = number(toks[toks.len() - 1], line)?;
                    (toks[toks.len() - 2], Some(v))
                } else {
                    (toks[toks.len() - 1], None)
                };
                let &j = b
                    .col_index
                    .get(col_name)
                    .ok_or_else(|| parse_err(line, format!("unknown column '{col_name}'")))?;
                match (kind.as_str(), value) {
                    ("UP", Some(v)) => {
                        if v < 0.0 && b.lower[j] == 0.0 {
                            b.lower[j] = f64::NEG_INFINITY;
                        }
                        b.upper[j] = v;
                    }
                    ("LO", Some(v)) => b.lower[j] = v,
                    ("FX", Some(v)) => {
                        b.lower[j] = v;
                        b.upper[j] = v;
                    }
                    ("UI", Some(v)) => {
                        b.upper[j] = v;
                        b.integer[j] = true;
                    }
                    ("LI", Some(v)) => {
                        b.lower[j] = v;
                        b.integer[j] = true;
                    }
                    ("FR", None) => {
                        b.lower[j] = f64::NEG_INFINITY;
                        b.upper[j] = f64::INFINITY;
                    }
                    ("MI", None) => b.lower[j] = f64::NEG_INFINITY,
                    ("PL", None) => b.upper[j] = f64::INFINITY,
                    ("BV", None) => {
                        b.lower[j] = 0.0;
                        b.upper[j] = 1.0;
                        b.integer[j] = true;
                    }
                    (other, _) if other == "SC" => {
                        return Err(MilpError::UnsupportedMpsFeature(
                            "semicontinuous bound".into(),
                        ))
                    }
                    (other, _) => {
                        return Err(parse_err(line, format!("unknown bound type '{other}'")))
                    }
                }
            }
        }
    }
    if !saw_end {
        return Err(parse_err(text.lines().count(), "missing ENDATA"));
    }
    if b.objective.is_empty() {
        return Err(MilpError::EmptyObjective);
    }

    let mut rows = Vec::new();
    for i in 0..b.row_types.len() {
        let ty = b.row_types[i];
        if matches!(ty, RowType::Objective | RowType::Free) {
            continue;
        }
        let coeffs = std::mem::take(&mut b.row_coeffs[i]);
        let rhs = b.rhs[i];
        // (sense, rhs) pairs this row expands to
        let sides: Vec<(RowSense, f64)> = match (ty, b.range[i]) {
            (RowType::Le, None) => vec![(RowSense::Le, rhs)],
            (RowType::Ge, None) => vec![(RowSense::Ge, rhs)],
            (RowType::Eq, None) => vec![(RowSense::Eq, rhs)],
            (RowType::Le, Some(r)) => vec![(RowSense::Ge, rhs - r.abs()), (RowSense::Le, rhs)],
            (RowType::Ge, Some(r)) => vec![(RowSense::Ge, rhs), (RowSense::Le, rhs + r.abs())],
            (RowType::Eq, Some(r)) if r >= 0.0 => {
                vec![(RowSense::Ge, rhs), (RowSense::Le, rhs + r)]
            }
            (RowType::Eq, Some(r)) => vec![(RowSense::Ge, rhs + r), (RowSense::Le, rhs)],
            _ => unreachable!(),
        };
        for (sense, side) in sides {
            if coeffs.iter().all(|&(_, v)| v == 0.0) {
                let ok = match sense {
                    RowSense::Le => 0.0 <= side,
                    RowSense::Ge => 0.0 >= side,
                    RowSense::Eq => side == 0.0,
                };
                if !ok {
                    return Err(parse_err(
                        0,
                        format!("empty row '{}' is infeasible", b.row_names[i]),
                    ));
                }
                continue;
            }
            rows.push(Row::new(coeffs.clone(), sense, side)?);
        }
    }

    let integrality = (0..b.integer.len()).filter(|&j| b.integer[j]).collect();
    let inst = MilpInstance {
        name: b.name,
        objective: b.objective,
        sense: b.sense,
        negated: false,
        rows,
        var_lower: b.lower,
        var_upper: b.upper,
        integrality,
        family: None,
        generator_version: None,
    };
    inst.validate()?;
    Ok(inst)
}

fn parse_sense(tok: &str, line: usize) -> Result<ObjSense, MilpError> {
    match tok.to_ascii_uppercase().as_str() {
        "MIN" | "MINIMIZE" => Ok(ObjSense::Minimize),
        "MAX" | "MAXIMIZE" => Ok(ObjSense::Maximize),
        other => Err(parse_err(
            line,
            format!("unknown objective sense '{other}'"),
        )),
    }
}
