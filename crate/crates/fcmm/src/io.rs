//! Dataset CSV ingestion and emission.
//!
//! Counts layout: `study,test,tp,n_diseased,tn,n_nondiseased`.
//! Cells layout: `study,test,tp,fn,tn,fp`, converted on load.
//! Tests are numbered from 1.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use fcmm_core::likelihood::{Dataset, StudyRecord, TestCounts};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    Counts,
    Cells,
}

impl Layout {
    fn header(self) -> [&'static str; 6] {
        match self {
            Layout::Counts => ["study", "test", "tp", "n_diseased", "tn", "n_nondiseased"],
            Layout::Cells => ["study", "test", "tp", "fn", "tn", "fp"],
        }
    }
}

pub fn load_dataset(path: &Path, layout: Layout) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(file, layout)
}

struct Row {
    line: usize,
    test: usize,
    counts: TestCounts,
}

/// Parses a dataset; `line` numbers in messages count the header as line 1.
pub fn read_dataset<R: Read>(reader: R, layout: Layout) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(|s| s.to_ascii_lowercase()).collect(),
        Err(_) => return Err(CliError::Validation("no studies".into())),
    };
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(CliError::Validation("no studies".into()));
    }
    let expected = layout.header();
    let index: Vec<usize> = expected
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Validation(format!("missing column '{name}'")))
        })
        .collect::<Result<_, _>>()?;
    let mut order: Vec<String> = Vec::new();
    let mut studies: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| CliError::Validation(format!("row {line}: {e}")))?;
        let field = |j: usize| rec.get(index[j]).unwrap_or("");
        let num = |j: usize| -> Result<u64, CliError> {
            field(j).parse::<u64>().map_err(|_| {
                CliError::Validation(format!(
                    "row {line}: {} '{}' is not a nonnegative integer",
                    expected[j],
                    field(j)
                ))
            })
        };
        let study = field(0).to_string();
        if study.is_empty() {
            return Err(CliError::Validation(format!("row {line}: empty study id")));
        }
        let test = num(1)? as usize;
        if test == 0 {
            return Err(CliError::Validation(format!("row {line}: tests are numbered from 1")));
        }
        let (a, b, c, d) = (num(2)?, num(3)?, num(4)?, num(5)?);
        let counts = match layout {
            Layout::Counts => {
                if a > b {
                    return Err(CliError::Validation(format!(
                        "row {line}: tp {a} exceeds n_diseased {b}"
                    )));
                }
                if c > d {
                    return Err(CliError::Validation(format!(
                        "row {line}: tn {c} exceeds n_nondiseased {d}"
                    )));
                }
                TestCounts::new(a, b, c, d)
            }
            Layout::Cells => TestCounts::new(a, a + b, c, c + d),
        };
        if !studies.contains_key(&study) {
            order.push(study.clone());
        }
        studies.entry(study).or_default().push(Row { line, test, counts });
    }
    if order.is_empty() {
        return Err(CliError::Validation("no studies".into()));
    }
    let n_tests = studies.values().flatten().map(|r| r.test).max().unwrap_or(0);
    let mut records = Vec::with_capacity(order.len());
    for id in &order {
        let rows = &studies[id];
        let mut tests: Vec<Option<&Row>> = vec![None; n_tests];
        for r in rows {
            if let Some(prev) = tests[r.test - 1] {
                return Err(CliError::Validation(format!(
                    "study {id}: test {} appears on rows {} and {}",
                    r.test, prev.line, r.line
                )));
            }
            tests[r.test - 1] = Some(r);
        }
        let missing: Vec<String> = tests
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_none())
            .map(|(t, _)| (t + 1).to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Validation(format!(
                "study {id}: missing rows for test {}",
                missing.join(", ")
            )));
        }
        let tests: Vec<&Row> = tests.into_iter().flatten().collect();
        let first = tests[0];
        for r in &tests[1..] {
            for (name, x, y) in [
                ("n_diseased", first.counts.n_diseased, r.counts.n_diseased),
                ("n_nondiseased", first.counts.n_nondiseased, r.counts.n_nondiseased),
            ] {
                if x != y {
                    return Err(CliError::Validation(format!(
                        "study {id}: {name} is {x} for test {} but {y} for test {}; \
                         the gold standard must be the same for all tests",
                        first.test, r.test
                    )));
                }
            }
        }
        let counts = tests.iter().map(|r| r.counts).collect();
        let record = StudyRecord::new(counts).map_err(|e| CliError::Validation(format!("study {id}: {e}")))?;
        records.push(record);
    }
    Dataset::with_ids(order, records).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn write_dataset<W: Write>(d: &Dataset, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(Layout::Counts.header())?;
    for (id, s) in d.ids().iter().zip(d.studies()) {
        for (t, c) in s.tests().iter().enumerate() {
            w.write_record([
                id.clone(),
                (t + 1).to_string(),
                c.tp.to_string(),
                c.n_diseased.to_string(),
                c.tn.to_string(),
                c.n_nondiseased.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_dataset(d, f)
}
