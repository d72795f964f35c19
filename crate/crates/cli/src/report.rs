/// Formats a probability with 12 significant digits.
pub fn prob(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// `{1,2,3}`.
pub fn id_set(ids: impl IntoIterator<Item = usize>) -> String {
    let parts: Vec<String> = ids.into_iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}
