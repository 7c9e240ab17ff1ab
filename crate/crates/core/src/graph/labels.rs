use std::path::Path;

use super::GraphError;
use crate::error::Error;

/// Parses `vertex_id class_id` lines (original vertex ids). Blank and `#`
/// lines are skipped; a vertex listed twice is a parse error.
pub fn parse_labels(text: &str) -> Result<Vec<(u64, u64)>, GraphError> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_ascii_whitespace().collect();
        let [vertex, class] = fields[..] else {
            return Err(GraphError::Parse {
                line: line_no,
                message: format!("expected `vertex_id class_id`, found {} fields", fields.len()),
            });
        };
        let parse = |tok: &str, what: &str| {
            tok.parse::<u64>().map_err(|_| GraphError::Parse {
                line: line_no,
                message: format!("{what} {tok:?} is not a nonnegative integer"),
            })
        };
        let vertex = parse(vertex, "vertex id")?;
        let class = parse(class, "class id")?;
        if !seen.insert(vertex) {
            return Err(GraphError::Parse {
                line: line_no,
                message: format!("vertex {vertex} labelled twice"),
            });
        }
        out.push((vertex, class));
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<(u64, u64)>, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_labels(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs() {
        assert_eq!(parse_labels("3 1\n# c\n\n7 0\n").unwrap(), vec![(3, 1), (7, 0)]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(parse_labels("1\n"), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!(parse_labels("1 2\n1 a\n"), Err(GraphError::Parse { line: 2, .. })));
        assert!(matches!(parse_labels("1 2\n1 3\n"), Err(GraphError::Parse { line: 2, .. })));
    }
}
