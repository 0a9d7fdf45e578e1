//! Problem files and plain CSV vectors/matrices.
//!
//! A problem file is JSON that either describes the data, with the matrix
//! and right-hand side in sibling CSV files,
//!
//! ```json
//! {"m": 1, "n": 2, "sigma": 0.5, "partition": [[0], [1]],
//!  "penalty": {"kind": "log", "eps": 0.1}, "loss": {"kind": "identity"},
//!  "matrix_csv": "A.csv", "b_csv": "b.csv"}
//! ```
//!
//! or holds an [`InstanceSpec`] to regenerate it from, such as
//! `{"seed": 7, "m": 108, "n": 512, "s": 16, "block_size": 2}`. Partition
//! indices are zero-based.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::bench::{self, InstanceSpec};
use crate::error::{Error, Result};
use crate::model::{ConcaveFn, GroupPartition, Problem};

/// Problem description with CSV paths relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemData {
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
    pub penalty: ConcaveFn,
    pub loss: ConcaveFn,
    pub partition: Vec<Vec<usize>>,
    pub matrix_csv: PathBuf,
    pub b_csv: PathBuf,
    /// Ground truth, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_orig_csv: Option<PathBuf>,
    /// The spec this data was generated from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<InstanceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemFile {
    Data(ProblemData),
    Generated(InstanceSpec),
}

/// A loaded problem together with its ground truth, if the file had one.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub problem: Problem,
    pub x_orig: Option<Array1<f64>>,
    pub spec: Option<InstanceSpec>,
}

impl ProblemData {
    /// Reads the CSV files, resolving relative paths against `base`.
    pub fn load(&self, base: &Path) -> Result<LoadedProblem> {
        let a = read_matrix_csv(File::open(base.join(&self.matrix_csv))?)?;
        let b = read_vector_csv(File::open(base.join(&self.b_csv))?)?;
        if a.dim() != (self.m, self.n) {
            let (what, expected, found) =
                if a.nrows() != self.m { ("matrix rows", self.m, a.nrows()) } else { ("matrix columns", self.n, a.ncols()) };
            return Err(Error::Dimension { what, expected, found });
        }
        let x_orig = match &self.x_orig_csv {
            Some(path) => {
                let x = read_vector_csv(File::open(base.join(path))?)?;
                if x.len() != self.n {
                    return Err(Error::Dimension { what: "x_orig", expected: self.n, found: x.len() });
                }
                Some(x)
            }
            None => None,
        };
        let partition = GroupPartition::new(self.n, self.partition.clone())?;
        let problem = Problem::new(a, b, self.sigma, partition, self.penalty, self.loss)?;
        Ok(LoadedProblem { problem, x_orig, spec: self.spec })
    }
}

impl ProblemFile {
    pub fn load(&self, base: &Path) -> Result<LoadedProblem> {
        match self {
            ProblemFile::Data(data) => data.load(base),
            ProblemFile::Generated(spec) => {
                let inst = bench::generate_instance(spec)?;
                Ok(LoadedProblem { problem: inst.problem, x_orig: Some(inst.x_orig), spec: Some(*spec) })
            }
        }
    }
}

pub fn read_problem_file(path: &Path) -> Result<ProblemFile> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a problem file and everything it refers to.
pub fn load_problem(path: &Path) -> Result<LoadedProblem> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_problem_file(path)?.load(base)
}

pub fn write_problem_file(path: &Path, file: &ProblemFile) -> Result<()> {
    let text = serde_json::to_string_pretty(file)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `problem.json`, `A.csv`, `b.csv` and, when given, `x_orig.csv`
/// into `dir`, and returns the path of the problem file.
pub fn write_problem_dir(
    dir: &Path,
    prob: &Problem,
    x_orig: Option<ArrayView1<f64>>,
    spec: Option<InstanceSpec>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let data = ProblemData {
        m: prob.rows(),
        n: prob.cols(),
        sigma: prob.sigma(),
        penalty: prob.psi(),
        loss: prob.phi(),
        partition: prob.partition().groups().to_vec(),
        matrix_csv: "A.csv".into(),
        b_csv: "b.csv".into(),
        x_orig_csv: x_orig.map(|_| "x_orig.csv".into()),
        spec,
    };
    write_matrix_csv(BufWriter::new(File::create(dir.join("A.csv"))?), prob.a())?;
    write_vector_csv(BufWriter::new(File::create(dir.join("b.csv"))?), prob.b())?;
    if let Some(x) = x_orig {
        write_vector_csv(BufWriter::new(File::create(dir.join("x_orig.csv"))?), x)?;
    }
    let path = dir.join("problem.json");
    write_problem_file(&path, &ProblemFile::Data(data))?;
    Ok(path)
}

fn parse_field(field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidParameter(format!("not a number: {field:?}")))
}

/// Reads a headerless CSV of numbers as rows.
pub fn read_csv_rows<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.iter().filter(|f| !f.trim().is_empty()).map(parse_field).collect::<Result<Vec<_>>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// A vector stored one value per line or as a single row.
pub fn read_vector_csv<R: Read>(input: R) -> Result<Array1<f64>> {
    Ok(Array1::from(read_csv_rows(input)?.concat()))
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<Array2<f64>> {
    let rows = read_csv_rows(input)?;
    let n = rows.first().map_or(0, Vec::len);
    if let Some(row) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::Dimension { what: "matrix row", expected: n, found: row.len() });
    }
    Array2::from_shape_vec((rows.len(), n), rows.concat()).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// One value per line, shortest round-trip formatting.
pub fn write_vector_csv<W: Write>(mut out: W, v: ArrayView1<f64>) -> Result<()> {
    for x in v {
        writeln!(out, "{x}")?;
    }
    Ok(())
}

pub fn write_matrix_csv<W: Write>(mut out: W, a: ArrayView2<f64>) -> Result<()> {
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
