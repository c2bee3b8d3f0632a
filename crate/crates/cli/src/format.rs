use std::fmt::Write;

/// `1517571` -> `1,517,571`.
pub fn grouped(v: u64) -> String {
    let s = v.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Fixed-width text table; `align` holds one `l` or `r` per column.
pub fn table(header: &[&str], align: &str, rows: &[Vec<String>]) -> String {
    let left: Vec<bool> = align.chars().map(|c| c == 'l').collect();
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut row = String::new();
        for (i, cell) in cells.iter().enumerate().take(cols) {
            let sep = if i == 0 { "" } else { "  " };
            if left.get(i).copied().unwrap_or(false) {
                let _ = write!(row, "{sep}{cell:<w$}", w = widths[i]);
            } else {
                let _ = write!(row, "{sep}{cell:>w$}", w = widths[i]);
            }
        }
        out.push_str(row.trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_thousands() {
        assert_eq!(grouped(0), "0");
        assert_eq!(grouped(999), "999");
        assert_eq!(grouped(1000), "1,000");
        assert_eq!(grouped(1_517_571), "1,517,571");
    }

    #[test]
    fn aligns_columns() {
        let t = table(&["a", "n", "s"], "lrl", &[vec!["xyz".into(), "10".into(), "".into()]]);
        assert_eq!(t, "a     n  s\nxyz  10\n");
    }
}
