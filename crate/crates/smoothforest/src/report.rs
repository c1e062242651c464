//! Before/after accuracy summaries.

/// Relative change `(after - before) / before` as a signed percentage with
/// one decimal, e.g. `+5.6%`.
pub fn format_delta(before: f64, after: f64) -> String {
    format!("{:+.1}%", relative_change(before, after) * 100.0)
}

pub fn relative_change(before: f64, after: f64) -> f64 {
    (after - before) / before
}

/// `initial & fine-tuned & delta` with four-decimal accuracies.
pub fn comparison_row(before: f64, after: f64) -> String {
    format!("{before:.4} & {after:.4} & {}", format_delta(before, after))
}
