//! Flat `key=value` configuration files for [`OuterConfig`].

use crate::outer::OuterConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    BadValue { line: usize, key: String, value: String },
}

/// Applies `key=value` lines on top of `base`. Blank lines and `#` comments
/// are skipped.
pub fn parse_config(text: &str, base: OuterConfig) -> Result<OuterConfig, ParseError> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        let (key, value) = s.split_once('=').ok_or(ParseError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = || ParseError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        let real = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "delta0" => cfg.delta0 = if value == "auto" { None } else { Some(real()?) },
            "tol_abs" => cfg.tol_abs = real()?,
            "rho_acc" => cfg.rho_acc = real()?,
            "rho_inc" => cfg.rho_inc = real()?,
            "gamma_inc" => cfg.gamma_inc = real()?,
            "gamma_dec" => cfg.gamma_dec = real()?,
            "max_outer" => cfg.max_outer = value.parse().map_err(|_| bad())?,
            _ => {
                return Err(ParseError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    Ok(cfg)
}
