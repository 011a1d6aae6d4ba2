//! In-memory dataset and its CSV layout.
//!
//! Files (UTF-8, comma separated, header row required):
//!
//! * functional: `subject_id,replicate,time_index,value` — one row per
//!   observation, `time_index` 0-based on a uniform grid over `[0, 1]`;
//! * scalar: `subject_id,replicate,value`;
//! * outcomes: `subject_id,y,<z columns...>`, the header names the covariates;
//! * optional truth files in the functional/scalar layouts with one replicate.
//!
//! Row order is irrelevant. Subjects are ordered numerically when every id is
//! an integer and lexicographically otherwise; replicates by their number.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::estimators::Covariates;
use crate::fungrid::{make_uniform_grid, FunctionalReplicates, Grid, ScalarReplicates};
use crate::glm::Family;

/// Error-free covariate values, available in simulations only.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub x1: Array2<f64>,
    pub x2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GflmDataset {
    pub subject_ids: Vec<String>,
    pub y: Vec<f64>,
    pub z: Covariates,
    pub w1: FunctionalReplicates,
    pub w2: ScalarReplicates,
    pub family: Family,
    pub truth: Option<Truth>,
}

impl GflmDataset {
    pub fn new(
        subject_ids: Vec<String>,
        y: Vec<f64>,
        z: Covariates,
        w1: FunctionalReplicates,
        w2: ScalarReplicates,
        family: Family,
        truth: Option<Truth>,
    ) -> Result<Self> {
        let n = y.len();
        let counts = [subject_ids.len(), z.n_rows(), w1.n_subjects(), w2.n_subjects()];
        if counts.iter().any(|&c| c != n) {
            return Err(Error::Shape(format!(
                "inconsistent subject counts: ids {}, y {n}, z {}, functional {}, scalar {}",
                counts[0], counts[1], counts[2], counts[3]
            )));
        }
        if let Some(t) = &truth {
            if t.x1.dim() != (n, w1.grid().len()) || t.x2.len() != n {
                return Err(Error::Shape("truth blocks do not match the observed data".into()));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("outcome contains non-finite values".into()));
        }
        if family == Family::BinomialLogit {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!(
                    "binomial outcome must be 0/1, subject {} has y = {}",
                    subject_ids[i], y[i]
                )));
            }
        }
        Ok(Self { subject_ids, y, z, w1, w2, family, truth })
    }

    pub fn n_subjects(&self) -> usize {
        self.y.len()
    }

    pub fn grid(&self) -> &Grid {
        self.w1.grid()
    }

    /// Subjects at `idx` (repeats allowed), replicate blocks travelling with them.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            subject_ids: idx.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            z: self.z.select(idx),
            w1: self.w1.select(idx),
            w2: self.w2.select(idx),
            family: self.family,
            truth: self.truth.as_ref().map(|t| Truth {
                x1: t.x1.select(Axis(0), idx),
                x2: idx.iter().map(|&i| t.x2[i]).collect(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub functional: PathBuf,
    pub scalar: PathBuf,
    pub outcomes: PathBuf,
    pub true_functional: Option<PathBuf>,
    pub true_scalar: Option<PathBuf>,
}

impl DatasetPaths {
    /// Conventional file names inside `dir`.
    pub fn in_dir(dir: &Path, with_truth: bool) -> Self {
        Self {
            functional: dir.join("functional.csv"),
            scalar: dir.join("scalar.csv"),
            outcomes: dir.join("outcomes.csv"),
            true_functional: with_truth.then(|| dir.join("true_functional.csv")),
            true_scalar: with_truth.then(|| dir.join("true_scalar.csv")),
        }
    }
}

/// Read and join the dataset files. `n_points` fixes the grid size; by default
/// it is one more than the largest time index.
pub fn load_dataset(paths: &DatasetPaths, n_points: Option<usize>, family: Family) -> Result<GflmDataset> {
    let functional = read_functional(&paths.functional)?;
    let scalar = read_scalar(&paths.scalar)?;
    let (outcome_rows, z_labels) = read_outcomes(&paths.outcomes)?;

    let ids: Vec<String> = sort_ids(outcome_rows.keys().cloned().collect());
    check_same_ids(&paths.outcomes, &ids, &paths.functional, functional.keys())?;
    check_same_ids(&paths.outcomes, &ids, &paths.scalar, scalar.keys())?;

    let max_index = functional.values().flat_map(|reps| reps.values()).flat_map(|pts| pts.keys()).max().copied();
    let m = match (n_points, max_index) {
        (Some(m), Some(max)) if max >= m => {
            return Err(Error::Data(format!(
                "{}: time_index {max} outside a {m}-point grid",
                paths.functional.display()
            )))
        }
        (Some(m), _) => m,
        (None, Some(max)) => max + 1,
        (None, None) => return Err(Error::Data(format!("{}: no observations", paths.functional.display()))),
    };
    let grid = make_uniform_grid(m)?;

    let blocks = assemble_functional(&paths.functional, &functional, &ids, m)?;
    let w1 = FunctionalReplicates::new(grid.clone(), blocks)?;
    let w2 = ScalarReplicates::new(ids.iter().map(|id| scalar[id].values().copied().collect()).collect())?;

    let y: Vec<f64> = ids.iter().map(|id| outcome_rows[id].0).collect();
    let zv = Array2::from_shape_fn((ids.len(), z_labels.len()), |(i, j)| outcome_rows[&ids[i]].1[j]);
    let z = Covariates::new(zv, z_labels)?;

    let truth = match (&paths.true_functional, &paths.true_scalar) {
        (None, None) => None,
        (Some(fp), Some(sp)) => {
            let tf = read_functional(fp)?;
            let ts = read_scalar(sp)?;
            check_same_ids(&paths.outcomes, &ids, fp, tf.keys())?;
            check_same_ids(&paths.outcomes, &ids, sp, ts.keys())?;
            let blocks = assemble_functional(fp, &tf, &ids, m)?;
            if blocks.iter().any(|b| b.nrows() != 1) || ids.iter().any(|id| ts[id].len() != 1) {
                return Err(Error::Data("truth files must hold exactly one replicate per subject".into()));
            }
            let mut x1 = Array2::zeros((ids.len(), m));
            for (i, b) in blocks.iter().enumerate() {
                x1.row_mut(i).assign(&b.row(0));
            }
            let x2 = ids.iter().map(|id| *ts[id].values().next().expect("one replicate")).collect();
            Some(Truth { x1, x2 })
        }
        _ => return Err(Error::Data("true functional and true scalar files must be given together".into())),
    };

    GflmDataset::new(ids, y, z, w1, w2, family, truth)
}

/// Write the dataset in the layout read by [`load_dataset`]; values round-trip exactly.
pub fn save_dataset(ds: &GflmDataset, paths: &DatasetPaths) -> Result<()> {
    let mut f = String::from("subject_id,replicate,time_index,value\n");
    for (id, block) in ds.subject_ids.iter().zip(ds.w1.subjects()) {
        for (r, rep) in block.outer_iter().enumerate() {
            for (h, v) in rep.iter().enumerate() {
                let _ = writeln!(f, "{id},{},{h},{v:?}", r + 1);
            }
        }
    }
    fs::write(&paths.functional, f)?;

    let mut s = String::from("subject_id,replicate,value\n");
    for (id, reps) in ds.subject_ids.iter().zip(ds.w2.subjects()) {
        for (r, v) in reps.iter().enumerate() {
            let _ = writeln!(s, "{id},{},{v:?}", r + 1);
        }
    }
    fs::write(&paths.scalar, s)?;

    let mut o = String::from("subject_id,y");
    for l in ds.z.labels() {
        o.push(',');
        o.push_str(l);
    }
    o.push('\n');
    for (i, id) in ds.subject_ids.iter().enumerate() {
        let _ = write!(o, "{id},{:?}", ds.y[i]);
        for v in ds.z.values().row(i) {
            let _ = write!(o, ",{v:?}");
        }
        o.push('\n');
    }
    fs::write(&paths.outcomes, o)?;

    if let (Some(t), Some(fp), Some(sp)) = (&ds.truth, &paths.true_functional, &paths.true_scalar) {
        let mut f = String::from("subject_id,replicate,time_index,value\n");
        let mut s = String::from("subject_id,replicate,value\n");
        for (i, id) in ds.subject_ids.iter().enumerate() {
            for (h, v) in t.x1.row(i).iter().enumerate() {
                let _ = writeln!(f, "{id},1,{h},{v:?}");
            }
            let _ = writeln!(s, "{id},1,{:?}", t.x2[i]);
        }
        fs::write(fp, f)?;
        fs::write(sp, s)?;
    }
    Ok(())
}

type FunctionalRows = HashMap<String, BTreeMap<i64, BTreeMap<usize, f64>>>;
type ScalarRows = HashMap<String, BTreeMap<i64, f64>>;

fn open(path: &Path, expected: &[&str]) -> Result<(csv::Reader<fs::File>, Vec<usize>, csv::StringRecord)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header = reader.headers()?.clone();
    let mut idx = Vec::with_capacity(expected.len());
    for name in expected {
        match header.iter().position(|h| h == *name) {
            Some(i) => idx.push(i),
            None => return Err(Error::Data(format!("{}: missing column '{name}'", path.display()))),
        }
    }
    Ok((reader, idx, header))
}

fn parse<T: std::str::FromStr>(path: &Path, line: u64, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Data(format!("{}:{line}: invalid {what} '{field}'", path.display())))
}

fn read_functional(path: &Path) -> Result<FunctionalRows> {
    let (mut reader, idx, _) = open(path, &["subject_id", "replicate", "time_index", "value"])?;
    let mut rows = FunctionalRows::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[idx[0]].to_string();
        let rep: i64 = parse(path, line, &rec[idx[1]], "replicate")?;
        let t: usize = parse(path, line, &rec[idx[2]], "time_index")?;
        let v: f64 = parse(path, line, &rec[idx[3]], "value")?;
        if !v.is_finite() {
            return Err(Error::Data(format!("{}:{line}: non-finite value", path.display())));
        }
        if rows.entry(id.clone()).or_default().entry(rep).or_default().insert(t, v).is_some() {
            return Err(Error::Data(format!(
                "{}:{line}: duplicate observation for subject {id}, replicate {rep}, time {t}",
                path.display()
            )));
        }
    }
    Ok(rows)
}

fn read_scalar(path: &Path) -> Result<ScalarRows> {
    let (mut reader, idx, _) = open(path, &["subject_id", "replicate", "value"])?;
    let mut rows = ScalarRows::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[idx[0]].to_string();
        let rep: i64 = parse(path, line, &rec[idx[1]], "replicate")?;
        let v: f64 = parse(path, line, &rec[idx[2]], "value")?;
        if !v.is_finite() {
            return Err(Error::Data(format!("{}:{line}: non-finite value", path.display())));
        }
        if rows.entry(id.clone()).or_default().insert(rep, v).is_some() {
            return Err(Error::Data(format!(
                "{}:{line}: duplicate observation for subject {id}, replicate {rep}",
                path.display()
            )));
        }
    }
    Ok(rows)
}

/// `subject_id -> (y, z row)` plus the z column labels.
type Outcomes = (HashMap<String, (f64, Vec<f64>)>, Vec<String>);

fn read_outcomes(path: &Path) -> Result<Outcomes> {
    let (mut reader, idx, header) = open(path, &["subject_id", "y"])?;
    let z_cols: Vec<usize> = (0..header.len()).filter(|c| !idx.contains(c)).collect();
    let labels: Vec<String> = z_cols.iter().map(|&c| header[c].to_string()).collect();
    let mut rows = HashMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[idx[0]].to_string();
        let y: f64 = parse(path, line, &rec[idx[1]], "outcome")?;
        let z = z_cols.iter().map(|&c| parse(path, line, &rec[c], "covariate")).collect::<Result<Vec<f64>>>()?;
        if rows.insert(id.clone(), (y, z)).is_some() {
            return Err(Error::Data(format!("{}:{line}: duplicate subject {id}", path.display())));
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no subjects", path.display())));
    }
    Ok((rows, labels))
}

fn sort_ids(mut ids: Vec<String>) -> Vec<String> {
    if ids.iter().all(|id| id.parse::<i64>().is_ok()) {
        ids.sort_by_key(|id| id.parse::<i64>().expect("checked"));
    } else {
        ids.sort();
    }
    ids
}

fn check_same_ids<'a>(
    reference: &Path,
    ids: &[String],
    path: &Path,
    other: impl Iterator<Item = &'a String>,
) -> Result<()> {
    let want: BTreeSet<&String> = ids.iter().collect();
    let got: BTreeSet<&String> = other.collect();
    let missing: Vec<&str> = want.difference(&got).take(10).map(|s| s.as_str()).collect();
    let extra: Vec<&str> = got.difference(&want).take(10).map(|s| s.as_str()).collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    let mut msg = format!("subject ids in {} do not match {}", path.display(), reference.display());
    if !missing.is_empty() {
        let _ = write!(msg, "; missing: {}", missing.join(" "));
    }
    if !extra.is_empty() {
        let _ = write!(msg, "; unknown: {}", extra.join(" "));
    }
    Err(Error::Data(msg))
}

fn assemble_functional(path: &Path, rows: &FunctionalRows, ids: &[String], m: usize) -> Result<Vec<Array2<f64>>> {
    let mut offenders = Vec::new();
    let mut blocks = Vec::with_capacity(ids.len());
    for id in ids {
        let reps = &rows[id];
        let mut block = Array2::zeros((reps.len(), m));
        for (r, (rep, pts)) in reps.iter().enumerate() {
            if pts.len() != m {
                let missing: Vec<String> = (0..m).filter(|t| !pts.contains_key(t)).take(5).map(|t| t.to_string()).collect();
                offenders.push(format!("{id}/{rep} (time {})", missing.join(" ")));
                continue;
            }
            for (&t, &v) in pts {
                block[[r, t]] = v;
            }
        }
        blocks.push(block);
    }
    if !offenders.is_empty() {
        let total = offenders.len();
        offenders.truncate(10);
        return Err(Error::Data(format!(
            "{}: {total} subject/replicate pairs have missing time points: {}",
            path.display(),
            offenders.join(", ")
        )));
    }
    Ok(blocks)
}
