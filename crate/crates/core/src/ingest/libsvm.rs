use std::io::{BufRead, Write};

use super::{LabeledDataset, Task};
use crate::error::{Error, Result};

/// Parses LIBSVM text (`label idx:val idx:val …`, 1-based ascending indices)
/// into dense rows.
///
/// Blank lines and lines starting with `#` are skipped. When `dim` is given
/// every index must lie in `1..=dim`; otherwise the largest index seen sets
/// the dimension. Label sets contained in `{0, 1}` or `{−1, +1}` are
/// normalized to ±1 and tagged binary; anything else is kept as a
/// regression target.
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<LabeledDataset> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_idx = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|y: &f64| y.is_finite())
            .ok_or_else(|| Error::parse_at_line(lineno, format!("invalid label {label_tok:?}")))?;

        let mut row = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse_at_line(lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = i
                .parse()
                .map_err(|_| Error::parse_at_line(lineno, format!("invalid index {i:?}")))?;
            let val: f64 = v
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::parse_at_line(lineno, format!("invalid value {v:?}")))?;
            if idx == 0 {
                return Err(Error::parse_at_line(lineno, "indices are 1-based"));
            }
            if idx <= prev {
                return Err(Error::parse_at_line(
                    lineno,
                    format!("index {idx} does not follow {prev} in ascending order"),
                ));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(Error::parse_at_line(lineno, format!("index {idx} exceeds dimension {d}")));
                }
            }
            prev = idx;
            row.push((idx, val));
        }
        max_idx = max_idx.max(prev);
        labels.push(label);
        rows.push(row);
    }

    let feature_dim = dim.unwrap_or(max_idx);
    let mut features = vec![0.0; rows.len() * feature_dim];
    for (r, row) in rows.iter().enumerate() {
        for &(idx, val) in row {
            features[r * feature_dim + idx - 1] = val;
        }
    }

    let is_01 = labels.iter().all(|&y| y == 0.0 || y == 1.0);
    let is_pm1 = labels.iter().all(|&y| y == -1.0 || y == 1.0);
    let task = if !labels.is_empty() && (is_01 || is_pm1) {
        for y in &mut labels {
            if *y == 0.0 {
                *y = -1.0;
            }
        }
        Task::Binary
    } else {
        Task::Regression
    };
    LabeledDataset::new(features, feature_dim, labels, task)
}

pub fn parse_libsvm_str(text: &str, dim: Option<usize>) -> Result<LabeledDataset> {
    parse_libsvm(text.as_bytes(), dim)
}

/// Writes nonzero entries only; the output parses back to the same dataset.
pub fn write_libsvm<W: Write>(ds: &LabeledDataset, mut out: W) -> std::io::Result<()> {
    for i in 0..ds.len() {
        let y = ds.labels[i];
        if ds.task == Task::Binary && y > 0.0 {
            write!(out, "+1")?;
        } else {
            write!(out, "{y}")?;
        }
        for (j, &x) in ds.row(i).iter().enumerate() {
            if x != 0.0 {
                write!(out, " {}:{x}", j + 1)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let ds = parse_libsvm_str("+1 1:0.5 3:2.0\n", Some(3)).unwrap();
        assert_eq!(ds.row(0), &[0.5, 0.0, 2.0]);
        assert_eq!(ds.labels, vec![1.0]);

        let ds = parse_libsvm_str("-1\n", Some(4)).unwrap();
        assert_eq!(ds.row(0), &[0.0; 4]);
        assert_eq!(ds.labels, vec![-1.0]);

        assert!(matches!(parse_libsvm_str("1 2:x\n", None), Err(Error::Parse { .. })));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "# header\n+1 1:1\n\n-1 3:1 2:1\n";
        match parse_libsvm_str(text, None) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "line 4"),
            other => panic!("unexpected {other:?}"),
        }
        for bad in ["+1 0:1", "+1 5:1", "x 1:1", "+1 1:nan", "+1 1=2", "+1 1:1 1:2"] {
            assert!(parse_libsvm_str(bad, Some(4)).is_err(), "{bad}");
        }
    }

    #[test]
    fn labels_are_normalized() {
        let ds = parse_libsvm_str("0 1:1\n1 2:1\n", None).unwrap();
        assert_eq!(ds.task, Task::Binary);
        assert_eq!(ds.labels, vec![-1.0, 1.0]);
        let ds = parse_libsvm_str("2.5 1:1\n-0.5 2:1\n", None).unwrap();
        assert_eq!(ds.task, Task::Regression);
        assert_eq!(ds.feature_dim, 2);
    }

    #[test]
    fn round_trip() {
        let text = "+1 1:0.5 3:-2.25\n-1 2:1e-7\n-1\n";
        let ds = parse_libsvm_str(text, Some(3)).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&ds, &mut buf).unwrap();
        assert_eq!(parse_libsvm(buf.as_slice(), Some(3)).unwrap(), ds);
    }
}
