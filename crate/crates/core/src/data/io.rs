//! Comma-separated dataset tables.
//!
//! Header: `core_0,..,core_{C-1},bias_0,..,bias_{B-1},y,b,aligned`. One row
//! per sample; features are written with 17 significant digits, `aligned`
//! is `1` or `0`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::split::{BiasedSample, DatasetSplit, SplitRole};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn save_split<S: Scalar>(split: &DatasetSplit<S>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_split(split, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_split<S: Scalar, W: Write>(split: &DatasetSplit<S>, w: &mut W) -> std::io::Result<()> {
    let mut header: Vec<String> = (0..split.core_dim()).map(|i| format!("core_{i}")).collect();
    header.extend((0..split.bias_dim()).map(|i| format!("bias_{i}")));
    header.extend(["y", "b", "aligned"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for s in split.samples() {
        for v in &s.x {
            write!(w, "{:.16e},", v.to_f64_lossy())?;
        }
        writeln!(w, "{},{},{}", s.y, s.b, u8::from(s.aligned))?;
    }
    Ok(())
}

pub fn load_split<S: Scalar>(
    path: &Path,
    num_classes: usize,
    role: SplitRole,
) -> Result<DatasetSplit<S>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };

    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, 1, "missing header row".into())),
    };
    let columns: Vec<&str> = header.trim_end().split(',').collect();
    let core_dim = columns
        .iter()
        .take_while(|c| c.starts_with("core_"))
        .count();
    let bias_dim = columns[core_dim..]
        .iter()
        .take_while(|c| c.starts_with("bias_"))
        .count();
    let width = core_dim + bias_dim + 3;
    for (i, c) in columns.iter().enumerate() {
        let expected = if i < core_dim {
            format!("core_{i}")
        } else if i < core_dim + bias_dim {
            format!("bias_{}", i - core_dim)
        } else {
            match i - core_dim - bias_dim {
                0 => "y".into(),
                1 => "b".into(),
                2 => "aligned".into(),
                _ => String::new(),
            }
        };
        if *c != expected {
            return Err(parse_err(
                1,
                i + 1,
                format!("unexpected column `{c}` (expected `{expected}`)"),
            ));
        }
    }
    if columns.len() != width {
        return Err(parse_err(
            1,
            columns.len().min(width) + 1,
            "header must end with y,b,aligned".into(),
        ));
    }

    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                lineno,
                fields.len().min(width) + 1,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        let mut x = Vec::with_capacity(core_dim + bias_dim);
        for (col, f) in fields[..core_dim + bias_dim].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, col + 1, format!("not a number: `{f}`")))?;
            if !v.is_finite() {
                return Err(parse_err(
                    lineno,
                    col + 1,
                    format!("non-finite feature `{f}`"),
                ));
            }
            x.push(S::of(v));
        }
        let label = |col: usize, name: &str| -> Result<usize> {
            let f = fields[col].trim();
            let v: usize = f.parse().map_err(|_| {
                parse_err(lineno, col + 1, format!("{name} is not an index: `{f}`"))
            })?;
            if v >= num_classes {
                return Err(parse_err(
                    lineno,
                    col + 1,
                    format!("{name} = {v} out of range for {num_classes} classes"),
                ));
            }
            Ok(v)
        };
        let y = label(core_dim + bias_dim, "y")?;
        let b = label(core_dim + bias_dim + 1, "b")?;
        let acol = core_dim + bias_dim + 2;
        let aligned = match fields[acol].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(parse_err(
                    lineno,
                    acol + 1,
                    format!("aligned flag must be 0 or 1, got `{other}`"),
                ))
            }
        };
        if aligned != (y == b) {
            return Err(parse_err(
                lineno,
                acol + 1,
                "aligned flag disagrees with y == b".into(),
            ));
        }
        samples.push(BiasedSample { x, y, b, aligned });
    }
    DatasetSplit::new(samples, role, num_classes, core_dim, bias_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, GenConfig};

    #[test]
    fn empty_split_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let split = DatasetSplit::<f64>::new(vec![], SplitRole::Test, 3, 3, 3).unwrap();
        save_split(&split, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "core_0,core_1,core_2,bias_0,bias_1,bias_2,y,b,aligned\n"
        );
        let back = load_split::<f64>(&path, 3, SplitRole::Test).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.core_dim(), 3);
    }

    #[test]
    fn default_train_split_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let (train, _) = generate::<f64>(&GenConfig::default()).unwrap();
        save_split(&train, &path).unwrap();
        let back = load_split::<f64>(&path, 4, SplitRole::Train).unwrap();
        assert_eq!(back.len(), train.len());
        for (a, b) in train.samples().iter().zip(back.samples()) {
            assert_eq!((a.y, a.b, a.aligned), (b.y, b.b, b.aligned));
            for (u, v) in a.x.iter().zip(&b.x) {
                assert!((u - v).abs() <= 1e-15 * u.abs().max(1.0));
            }
        }
    }

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn label_equal_to_class_count_is_rejected() {
        let (_d, path) = write("core_0,core_1,bias_0,bias_1,y,b,aligned\n0.1,0.2,0.3,0.4,2,2,1\n");
        match load_split::<f64>(&path, 2, SplitRole::Train) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 5)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_number_reports_line_and_column() {
        let (_d, path) = write(
            "core_0,core_1,bias_0,bias_1,y,b,aligned\n0.1,0.2,0.3,0.4,1,1,1\n0.1,zz,0.3,0.4,1,1,1\n",
        );
        match load_split::<f64>(&path, 2, SplitRole::Train) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
        let (_d, path) = write("core_0,bias_0,y,b\n");
        assert!(load_split::<f64>(&path, 2, SplitRole::Train).is_err());
        let (_d, path) = write("core_0,bias_0,y,b,aligned\n1,2,0,1,1\n");
        assert!(matches!(
            load_split::<f64>(&path, 2, SplitRole::Train),
            Err(Error::Parse { column: 5, .. })
        ));
    }
}
