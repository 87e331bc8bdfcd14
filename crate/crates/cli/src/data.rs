//! CSV input and the column-role grammar.
//!
//! A role specification is a comma-separated list of `COLUMN=ROLE` or
//! `FIRST:LAST=ROLE` entries (a range covers the header columns from `FIRST`
//! to `LAST` inclusive). Roles: `part` (alias `composition`), `response`,
//! `covariate`, `covariate:log`, `factor`, `strata`, `ignore`. Columns not
//! mentioned are ignored.

use std::path::Path;

use coda_alpha::CompositionBatch;
use nalgebra::DMatrix;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Part,
    Response,
    Covariate,
    LogCovariate,
    Factor,
    Strata,
    Ignore,
}

impl Role {
    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s.trim() {
            "part" | "composition" => Role::Part,
            "response" => Role::Response,
            "covariate" => Role::Covariate,
            "covariate:log" => Role::LogCovariate,
            "factor" => Role::Factor,
            "strata" => Role::Strata,
            "ignore" => Role::Ignore,
            other => return Err(CliError::Config(format!("unknown role {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Selector {
    Column(String),
    Range(String, String),
}

/// Parsed role specification, resolved against a header by [`RoleSpec::resolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoleSpec {
    entries: Vec<(Selector, Role)>,
}

impl RoleSpec {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let mut entries = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (lhs, rhs) = item.split_once('=').ok_or_else(|| {
                CliError::Config(format!("role entry {item:?} is not COLUMN=ROLE"))
            })?;
            let role = Role::parse(rhs)?;
            let selector = match lhs.split_once(':') {
                Some((a, b)) => Selector::Range(a.trim().to_string(), b.trim().to_string()),
                None => Selector::Column(lhs.trim().to_string()),
            };
            entries.push((selector, role));
        }
        if entries.is_empty() {
            return Err(CliError::Config("empty role specification".into()));
        }
        Ok(Self { entries })
    }

    /// Role of every header column.
    pub fn resolve(&self, header: &[String]) -> Result<Vec<Role>, CliError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::MissingColumn(name.to_string()))
        };
        let mut roles = vec![None; header.len()];
        for (selector, role) in &self.entries {
            let columns = match selector {
                Selector::Column(c) => vec![find(c)?],
                Selector::Range(a, b) => {
                    let (i, j) = (find(a)?, find(b)?);
                    if i > j {
                        return Err(CliError::Config(format!("range {a}:{b} runs backwards")));
                    }
                    (i..=j).collect()
                }
            };
            for c in columns {
                if roles[c].is_some() {
                    return Err(CliError::Config(format!(
                        "column {:?} is given two roles",
                        header[c]
                    )));
                }
                roles[c] = Some(*role);
            }
        }
        Ok(roles
            .into_iter()
            .map(|r| r.unwrap_or(Role::Ignore))
            .collect())
    }
}

/// Columns of an input file split by role.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub composition: CompositionBatch,
    pub response: Option<(String, Vec<f64>)>,
    /// Covariate values (log-transformed where requested) and their names.
    pub covariates: Option<(Vec<String>, DMatrix<f64>)>,
    pub factor: Option<(String, Vec<String>)>,
    pub strata: Option<(String, Vec<String>)>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.composition.n()
    }
}

/// Reads a headed CSV file and assigns columns according to `roles`.
pub fn load_csv(path: &Path, roles: &RoleSpec) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let column_roles = roles.resolve(&header)?;
    let count = |r: Role| column_roles.iter().filter(|&&x| x == r).count();
    if count(Role::Part) < 2 {
        return Err(CliError::Config(
            "at least two part columns are required".into(),
        ));
    }
    for role in [Role::Response, Role::Factor, Role::Strata] {
        if count(role) > 1 {
            return Err(CliError::Config(format!(
                "at most one {role:?} column is allowed"
            )));
        }
    }

    let mut parts: Vec<Vec<f64>> = Vec::new();
    let mut response = Vec::new();
    let mut covariates: Vec<Vec<f64>> = Vec::new();
    let mut factor = Vec::new();
    let mut strata = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(CliError::Data(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let number = |c: usize| -> Result<f64, CliError> {
            let raw = &record[c];
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Parse {
                    row,
                    column: header[c].clone(),
                    value: raw.to_string(),
                })
        };
        let mut p = Vec::new();
        let mut cov = Vec::new();
        for (c, role) in column_roles.iter().enumerate() {
            match role {
                Role::Part => p.push(number(c)?),
                Role::Response => response.push(number(c)?),
                Role::Covariate => cov.push(number(c)?),
                Role::LogCovariate => {
                    let v = number(c)?;
                    if v.is_nan() || v <= 0.0 {
                        return Err(CliError::Data(format!(
                            "row {row}, column {:?}: log covariate must be positive, got {v}",
                            header[c]
                        )));
                    }
                    cov.push(v.ln());
                }
                Role::Factor => factor.push(record[c].to_string()),
                Role::Strata => strata.push(record[c].to_string()),
                Role::Ignore => {}
            }
        }
        parts.push(p);
        covariates.push(cov);
    }
    if parts.is_empty() {
        return Err(CliError::EmptyData);
    }

    let names_for = |wanted: &dyn Fn(Role) -> bool| -> Vec<String> {
        header
            .iter()
            .zip(&column_roles)
            .filter(|(_, r)| wanted(**r))
            .map(|(h, _)| h.clone())
            .collect()
    };
    let part_labels = names_for(&|r| r == Role::Part);
    let composition = CompositionBatch::from_rows(&parts, Some(part_labels))
        .map_err(|e| CliError::Data(format!("invalid composition: {e}")))?;
    let single = |role: Role, values: Vec<String>| {
        names_for(&|r| r == role).pop().map(|name| (name, values))
    };
    let covariate_names = names_for(&|r| matches!(r, Role::Covariate | Role::LogCovariate));
    let covariates = (!covariate_names.is_empty()).then(|| {
        let n = covariates.len();
        let p = covariate_names.len();
        (
            covariate_names,
            DMatrix::from_fn(n, p, |i, j| covariates[i][j]),
        )
    });
    Ok(Dataset {
        composition,
        response: names_for(&|r| r == Role::Response)
            .pop()
            .map(|name| (name, response)),
        covariates,
        factor: single(Role::Factor, factor),
        strata: single(Role::Strata, strata),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path.display(), io),
        other => CliError::Data(format!("malformed CSV {}: {other:?}", path.display())),
    }
}
