//! Number parsing and exact-rational display.

/// Largest denominator tried when printing a value as a fraction.
pub const MAX_DENOMINATOR: i64 = 10_000;

/// Finds `p/q` with `q ≤ max_den` and `|p/q − x| ≤ 1e-12·|x|` via continued fractions.
pub fn as_rational(x: f64, max_den: i64) -> Option<(i64, i64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let approx = h1 as f64 / k1 as f64;
        if (approx - x).abs() <= 1e-12 * x.abs().max(f64::MIN_POSITIVE) {
            return Some((h1, k1));
        }
        let frac = rest - a as f64;
        if frac == 0.0 {
            return None;
        }
        rest = 1.0 / frac;
    }
    None
}

/// `7/4`, `3`, or a plain decimal when no small fraction matches.
pub fn format_exact(x: f64) -> String {
    match as_rational(x, MAX_DENOMINATOR) {
        Some((p, 1)) => p.to_string(),
        Some((p, q)) => format!("{p}/{q}"),
        None => format!("{x}"),
    }
}

/// Parses `0.65`, `13/20` or `-3.5`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            if q == 0.0 {
                return Err(format!("`{s}` divides by zero"));
            }
            p / q
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if !value.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(value)
}
