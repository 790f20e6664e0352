//! CSV ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::GroupSample;

/// Reads every `group_<id>.csv` in `dir`. Each file has a header of `p`
/// variable names followed by one observation per row. Groups come back
/// sorted by id.
pub fn load_groups(dir: impl AsRef<Path>) -> Result<Vec<GroupSample>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(id) = name.strip_prefix("group_").and_then(|s| s.strip_suffix(".csv")) else {
            continue;
        };
        let id: usize = id
            .parse()
            .map_err(|_| Error::Data(format!("{name}: group id `{id}` is not a non-negative integer")))?;
        if files.insert(id, path.clone()).is_some() {
            return Err(Error::Data(format!("group id {id} appears twice")));
        }
    }
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no group_<id>.csv files in {}", dir.display())));
    }
    let mut groups = Vec::with_capacity(files.len());
    let mut p_seen: Option<(usize, String)> = None;
    for (id, path) in files {
        let (header, rows) = read_numeric_csv(&path)?;
        let p = header.len();
        let name = path.display().to_string();
        match &p_seen {
            None => p_seen = Some((p, name.clone())),
            Some((p0, first)) if *p0 != p => {
                return Err(Error::Data(format!("{name} has {p} columns but {first} has {p0}")));
            }
            Some(_) => {}
        }
        if rows.len() < GroupSample::MIN_OBSERVATIONS {
            return Err(Error::SampleTooSmall {
                group_id: id,
                n: rows.len(),
                min: GroupSample::MIN_OBSERVATIONS,
            });
        }
        let data = DMatrix::from_fn(p, rows.len(), |r, c| rows[c][r]);
        groups.push(GroupSample::new(id, data)?);
    }
    Ok(groups)
}

/// Header plus rows of finite numbers. Row numbers in errors count the
/// header as line 1.
fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let name = path.display();
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
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Data(format!("{name}: missing header row")));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let mut row = Vec::with_capacity(header.len());
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "{name}: row {line}, column {} (`{}`): `{cell}` is not a number",
                    col + 1,
                    header[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{name}: row {line}, column {} (`{}`): non-finite value",
                    col + 1,
                    header[col]
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| format!(" at line {}", p.line())).unwrap_or_default();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Data(format!("{}{line}: {kind:?}", path.display())),
    }
}

/// Reads matrix-valued observations from a long CSV with header
/// `obs,row,col,value` (1-based `row` and `col`). Every observation must fill
/// the same complete `p×q` grid. Observations come back ordered by `obs`.
pub fn load_matrix_observations(file: impl AsRef<Path>) -> Result<Vec<DMatrix<f64>>> {
    let path = file.as_ref();
    let name = path.display();
    let (header, rows) = read_numeric_csv(path)?;
    let expected = ["obs", "row", "col", "value"];
    if header.len() != 4 || header.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(Error::Data(format!(
            "{name}: header must be obs,row,col,value, got {}",
            header.join(",")
        )));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{name}: no observations")));
    }
    let index = |v: f64, what: &str, line: usize, min: i64| -> Result<i64> {
        if v.fract() != 0.0 || v < min as f64 {
            return Err(Error::Data(format!(
                "{name}: row {line}: {what} = {v} is not an integer >= {min}"
            )));
        }
        Ok(v as i64)
    };
    let mut cells: BTreeMap<i64, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    let (mut p, mut q) = (0usize, 0usize);
    for (k, r) in rows.iter().enumerate() {
        let line = k + 2;
        let obs = index(r[0], "obs", line, i64::MIN)?;
        let row = index(r[1], "row", line, 1)? as usize;
        let col = index(r[2], "col", line, 1)? as usize;
        p = p.max(row);
        q = q.max(col);
        if cells.entry(obs).or_default().insert((row, col), r[3]).is_some() {
            return Err(Error::Data(format!(
                "{name}: duplicate cell (obs {obs}, row {row}, col {col}) at row {line}"
            )));
        }
    }
    let mut out = Vec::with_capacity(cells.len());
    for (obs, grid) in cells {
        let mut m = DMatrix::zeros(p, q);
        for col in 1..=q {
            for row in 1..=p {
                let v = grid.get(&(row, col)).ok_or_else(|| {
                    Error::Data(format!("{name}: missing cell (obs {obs}, row {row}, col {col})"))
                })?;
                m[(row - 1, col - 1)] = *v;
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Splits `p×q` matrix observations into `q` groups, one per column: group
/// `j + 1` holds column `j` of every observation.
pub fn groups_from_matrix_observations(obs: &[DMatrix<f64>]) -> Result<Vec<GroupSample>> {
    let first = obs
        .first()
        .ok_or_else(|| Error::EmptyInput("no matrix observations".into()))?;
    let (p, q) = first.shape();
    if let Some(t) = obs.iter().position(|m| m.shape() != (p, q)) {
        return Err(Error::Data(format!(
            "observation {} is {:?}, the first is {p}x{q}",
            t + 1,
            obs[t].shape()
        )));
    }
    (0..q)
        .map(|j| {
            let data = DMatrix::from_fn(p, obs.len(), |r, t| obs[t][(r, j)]);
            GroupSample::new(j + 1, data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn write_group(dir: &Path, id: usize, p: usize, n: usize) {
        let mut s = (0..p).map(|j| format!("v{j}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for i in 0..n {
            let row: Vec<String> = (0..p).map(|j| format!("{}", (i * p + j) as f64 * 0.1 - 1.0)).collect();
            writeln!(s, "{}", row.join(",")).unwrap();
        }
        std::fs::write(dir.join(format!("group_{id}.csv")), s).unwrap();
    }

    #[test]
    fn two_groups_sorted_and_transposed() {
        let dir = tempfile::tempdir().unwrap();
        write_group(dir.path(), 10, 3, 6);
        write_group(dir.path(), 2, 3, 7);
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let groups = load_groups(dir.path()).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].group_id(), 2);
        assert_eq!(groups[1].group_id(), 10);
        assert_eq!((groups[0].dim_p(), groups[0].n()), (3, 7));
        // second observation, first variable
        assert!((groups[0].data()[(0, 1)] - (0.3 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn group_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_groups(dir.path()), Err(Error::EmptyInput(_))));
        write_group(dir.path(), 1, 3, 6);
        write_group(dir.path(), 2, 4, 6);
        assert!(matches!(load_groups(dir.path()), Err(Error::Data(_))));

        let dir = tempfile::tempdir().unwrap();
        write_group(dir.path(), 1, 3, 4);
        assert!(matches!(
            load_groups(dir.path()),
            Err(Error::SampleTooSmall { group_id: 1, n: 4, min: 5 })
        ));

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("group_1.csv"), "a,b\n1,2\n3,x\n").unwrap();
        match load_groups(dir.path()) {
            Err(Error::Data(msg)) => {
                assert!(msg.contains("row 3") && msg.contains("column 2"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    fn long_csv(obs: &[(i64, usize, usize, f64)]) -> String {
        let mut s = String::from("obs,row,col,value\n");
        for (o, r, c, v) in obs {
            writeln!(s, "{o},{r},{c},{v}").unwrap();
        }
        s
    }

    fn grid(ids: &[i64], p: usize, q: usize) -> Vec<(i64, usize, usize, f64)> {
        let mut cells = Vec::new();
        for &o in ids {
            for r in 1..=p {
                for c in 1..=q {
                    cells.push((o, r, c, o as f64 * 100.0 + r as f64 * 10.0 + c as f64));
                }
            }
        }
        cells
    }

    #[test]
    fn matrix_observations_roundtrip_and_shuffle() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let mut cells = grid(&[2, 1], 3, 2);
        std::fs::write(&path, long_csv(&cells)).unwrap();
        let a = load_matrix_observations(&path).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].shape(), (3, 2));
        assert_eq!(a[0][(2, 1)], 132.0);
        assert_eq!(a[1][(0, 0)], 211.0);
        cells.reverse();
        cells.swap(1, 7);
        std::fs::write(&path, long_csv(&cells)).unwrap();
        assert_eq!(load_matrix_observations(&path).unwrap(), a);
    }

    #[test]
    fn matrix_observation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let mut cells = grid(&[1, 2], 2, 2);
        cells.retain(|c| !(c.0 == 2 && c.1 == 1 && c.2 == 2));
        std::fs::write(&path, long_csv(&cells)).unwrap();
        match load_matrix_observations(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains("obs 2, row 1, col 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut cells = grid(&[1], 2, 2);
        cells.push((1, 2, 2, 5.0));
        std::fs::write(&path, long_csv(&cells)).unwrap();
        assert!(matches!(load_matrix_observations(&path), Err(Error::Data(m)) if m.contains("duplicate")));
    }

    #[test]
    fn columns_become_groups() {
        let obs: Vec<DMatrix<f64>> = (0..6)
            .map(|t| DMatrix::from_fn(3, 2, |r, c| (t * 100 + r * 10 + c) as f64))
            .collect();
        let groups = groups_from_matrix_observations(&obs).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[1].group_id(), 2);
        assert_eq!((groups[1].dim_p(), groups[1].n()), (3, 6));
        assert_eq!(groups[1].data()[(2, 4)], 421.0);
    }
}
