//! TOML problem and matrix files.
//!
//! Matrices are row-major nested arrays. A problem file holds the integer
//! dimensions `n`, `m1`, `m2`, `r`, the coefficient matrices `A`, `C` (list),
//! `B1`, `B2`, `D1` (list), `D2` (list), `Q`, `S1`, `S2`, `R11`, `R12`, `R22`,
//! and optionally a certificate gain `L`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Table;

use crate::model::GtareProblem;
use crate::numerics::{Matrix, SymMatrix};

pub type Rows = Vec<Vec<f64>>;

const PROBLEM_KEYS: [&str; 21] = [
    "n", "m1", "m2", "r", "A", "C", "B1", "B2", "D1", "D2", "Q", "S1", "S2", "R11", "R12", "R22", "L",
    "name", "description", "P_reference", "notes",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub r: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "C")]
    pub c: Vec<Rows>,
    #[serde(rename = "B1")]
    pub b1: Rows,
    #[serde(rename = "B2")]
    pub b2: Rows,
    #[serde(rename = "D1")]
    pub d1: Vec<Rows>,
    #[serde(rename = "D2")]
    pub d2: Vec<Rows>,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "S1")]
    pub s1: Rows,
    #[serde(rename = "S2")]
    pub s2: Rows,
    #[serde(rename = "R11")]
    pub r11: Rows,
    #[serde(rename = "R12")]
    pub r12: Rows,
    #[serde(rename = "R22")]
    pub r22: Rows,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Rows>,
    /// Reference solution shipped with a fixture.
    #[serde(rename = "P_reference", default, skip_serializing_if = "Option::is_none")]
    pub p_reference: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FileError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown field `{field}` in {path}")]
    UnknownField { path: String, field: String },
    #[error("{0}")]
    Shape(String),
}

/// Rows to a matrix; `cols` is used when there are no rows.
pub fn to_matrix(name: &str, rows: &Rows, cols: usize) -> Result<Matrix, FileError> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(FileError::Shape(format!("{name} has rows of different lengths")));
    }
    Ok(Matrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

pub fn from_matrix(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ProblemFile {
    pub fn from_problem(problem: &GtareProblem) -> Self {
        let list = |v: &[Matrix]| v.iter().map(from_matrix).collect();
        ProblemFile {
            name: None,
            description: None,
            n: problem.n(),
            m1: problem.m1(),
            m2: problem.m2(),
            r: problem.r(),
            a: from_matrix(&problem.a),
            c: list(&problem.c),
            b1: from_matrix(&problem.b1),
            b2: from_matrix(&problem.b2),
            d1: list(&problem.d1),
            d2: list(&problem.d2),
            q: from_matrix(&problem.q),
            s1: from_matrix(&problem.s1),
            s2: from_matrix(&problem.s2),
            r11: from_matrix(&problem.r11),
            r12: from_matrix(&problem.r12),
            r22: from_matrix(&problem.r22),
            l: None,
            p_reference: None,
            notes: None,
        }
    }

    /// Builds the problem. Dimension consistency is left to
    /// [`GtareProblem::validate`], except that the declared sizes must
    /// match the matrices.
    pub fn to_problem(&self) -> Result<GtareProblem, FileError> {
        let (n, m1, m2) = (self.n, self.m1, self.m2);
        let list = |name: &str, v: &[Rows], cols: usize| -> Result<Vec<Matrix>, FileError> {
            v.iter()
                .enumerate()
                .map(|(l, m)| to_matrix(&format!("{name}[{}]", l + 1), m, cols))
                .collect()
        };
        let problem = GtareProblem {
            a: to_matrix("A", &self.a, n)?,
            c: list("C", &self.c, n)?,
            b1: to_matrix("B1", &self.b1, m1)?,
            b2: to_matrix("B2", &self.b2, m2)?,
            d1: list("D1", &self.d1, m1)?,
            d2: list("D2", &self.d2, m2)?,
            q: to_matrix("Q", &self.q, n)?,
            s1: to_matrix("S1", &self.s1, n)?,
            s2: to_matrix("S2", &self.s2, n)?,
            r11: to_matrix("R11", &self.r11, m1)?,
            r12: to_matrix("R12", &self.r12, m2)?,
            r22: to_matrix("R22", &self.r22, m2)?,
        };
        let declared = (n, m1, m2, self.r);
        let actual = (problem.n(), problem.m1(), problem.m2(), problem.r());
        if declared != actual {
            return Err(FileError::Shape(format!(
                "declared (n, m1, m2, r) = {declared:?} but the matrices give {actual:?}"
            )));
        }
        Ok(problem)
    }

    pub fn certificate(&self) -> Result<Option<Matrix>, FileError> {
        self.l.as_ref().map(|l| to_matrix("L", l, self.n)).transpose()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem files always serialize")
    }
}

fn read(path: &Path) -> Result<String, FileError> {
    std::fs::read_to_string(path).map_err(|e| FileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn parse_table(path: &Path, text: &str) -> Result<Table, FileError> {
    text.parse::<Table>().map_err(|e| FileError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn from_table<T: serde::de::DeserializeOwned>(path: &Path, table: Table) -> Result<T, FileError> {
    table.try_into().map_err(|e: toml::de::Error| FileError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads a problem file. Unknown fields are errors unless `lax`, in which
/// case they are logged and dropped.
pub fn read_problem(path: &Path, lax: bool) -> Result<ProblemFile, FileError> {
    parse_problem(path, &read(path)?, lax)
}

pub fn parse_problem(path: &Path, text: &str, lax: bool) -> Result<ProblemFile, FileError> {
    let mut table = parse_table(path, text)?;
    let unknown: Vec<String> = table
        .keys()
        .filter(|k| !PROBLEM_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    for field in unknown {
        if !lax {
            return Err(FileError::UnknownField {
                path: path.display().to_string(),
                field,
            });
        }
        log::warn!("ignoring unknown field `{field}` in {}", path.display());
        table.remove(&field);
    }
    from_table(path, table)
}

/// A file with a single matrix under `key`, or one of several keys.
pub fn read_matrix(path: &Path, keys: &[&str]) -> Result<(String, Matrix), FileError> {
    let table = parse_table(path, &read(path)?)?;
    for key in keys {
        if let Some(value) = table.get(*key) {
            let rows: Rows = value.clone().try_into().map_err(|e: toml::de::Error| FileError::Parse {
                path: path.display().to_string(),
                message: format!("{key}: {e}"),
            })?;
            return Ok((key.to_string(), to_matrix(key, &rows, 0)?));
        }
    }
    Err(FileError::Parse {
        path: path.display().to_string(),
        message: format!("expected one of the fields {keys:?}"),
    })
}

pub fn read_sym(path: &Path, keys: &[&str]) -> Result<SymMatrix, FileError> {
    let (key, m) = read_matrix(path, keys)?;
    if !m.is_square() {
        return Err(FileError::Shape(format!("{key} is not square")));
    }
    SymMatrix::new(m).map_err(|e| FileError::Shape(format!("{key}: {e}")))
}

/// Optional matrix under `key` in a file that may hold other fields.
pub fn read_optional_matrix(path: &Path, key: &str) -> Result<Option<Matrix>, FileError> {
    let table = parse_table(path, &read(path)?)?;
    match table.get(key) {
        None => Ok(None),
        Some(value) => {
            let rows: Rows = value.clone().try_into().map_err(|e: toml::de::Error| FileError::Parse {
                path: path.display().to_string(),
                message: format!("{key}: {e}"),
            })?;
            to_matrix(key, &rows, 0).map(Some)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_problem, ProblemShape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for shape in [ProblemShape::new(3, 2, 2, 2), ProblemShape::new(1, 1, 1, 0), ProblemShape::new(4, 1, 3, 1)] {
            let p = random_problem(&mut rng, shape);
            let text = ProblemFile::from_problem(&p).to_toml();
            let back = parse_problem(Path::new("mem"), &text, false).unwrap().to_problem().unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn unknown_fields() {
        let p = random_problem(&mut ChaCha8Rng::seed_from_u64(42), ProblemShape::new(2, 1, 1, 1));
        let text = format!("extra = 1\n{}", ProblemFile::from_problem(&p).to_toml());
        assert!(matches!(
            parse_problem(Path::new("mem"), &text, false),
            Err(FileError::UnknownField { .. })
        ));
        let f = parse_problem(Path::new("mem"), &text, true).unwrap();
        assert_eq!(f.to_problem().unwrap(), p);
    }

    #[test]
    fn ragged_and_mislabelled_shapes_are_rejected() {
        assert!(to_matrix("X", &vec![vec![1.0, 2.0], vec![3.0]], 2).is_err());
        let p = random_problem(&mut ChaCha8Rng::seed_from_u64(43), ProblemShape::new(2, 1, 1, 1));
        let mut f = ProblemFile::from_problem(&p);
        f.n = 3;
        assert!(matches!(f.to_problem(), Err(FileError::Shape(_))));
    }
}
