//! Deterministic text output helpers.

/// Reals are written in scientific notation with 17 significant digits so
/// that every value round-trips exactly.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Join already-formatted fields into one CSV line.
pub fn csv_line<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(f.as_ref());
    }
    out
}
