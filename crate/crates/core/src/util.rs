use std::io::Write;

/// Formats a double with 17 significant digits, which round-trips exactly.
pub(crate) fn fmt17(value: f64) -> String {
    format!("{value:.16e}")
}

pub(crate) fn write_csv_row<W: Write>(out: &mut W, cells: &[String]) -> std::io::Result<()> {
    writeln!(out, "{}", cells.join(","))
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
