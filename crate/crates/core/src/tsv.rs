//! Shared reader for the tab-separated configuration files (vocabulary,
//! aliases, source priority, units, external codes).

/// One non-blank, non-comment line of a TSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsvRecord<'a> {
    /// 1-based line number in the source.
    pub line: usize,
    pub fields: Vec<&'a str>,
}

/// Splits `text` into records. Lines starting with `#` and blank lines are
/// skipped; fields are trimmed of surrounding spaces but tabs are significant.
pub fn records(text: &str) -> impl Iterator<Item = TsvRecord<'_>> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            return None;
        }
        Some(TsvRecord {
            line: i + 1,
            fields: line.split('\t').map(str::trim).collect(),
        })
    })
}
