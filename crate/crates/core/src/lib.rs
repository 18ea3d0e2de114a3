pub mod bench;
pub mod catalog;
pub mod coeff_file;
pub mod coefficients;
pub mod engine;
pub mod optimizer;
pub mod precision;
pub mod systems;
pub mod sho;

/// Quotes a CSV field when it contains a separator, quote or newline.
pub(crate) fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}
