const LEVELS: &[u8] = b" .:-=+*#%@";

/// ASCII sparkline of `values` squeezed into at most `width` columns.
/// Each column shows the mean of its bucket; `NaN`s are skipped.
pub fn sparkline(values: &[f64], width: usize) -> String {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || width == 0 {
        return String::new();
    }
    let columns = width.min(finite.len());
    let buckets: Vec<f64> = (0..columns)
        .map(|c| {
            let start = c * finite.len() / columns;
            let end = ((c + 1) * finite.len() / columns).max(start + 1);
            finite[start..end].iter().sum::<f64>() / (end - start) as f64
        })
        .collect();
    let lo = buckets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = buckets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = LEVELS.len() - 1;
    buckets
        .iter()
        .map(|&v| {
            let level = if hi > lo {
                (((v - lo) / (hi - lo)) * top as f64).round() as usize
            } else {
                top / 2
            };
            LEVELS[level.min(top)] as char
        })
        .collect()
}
