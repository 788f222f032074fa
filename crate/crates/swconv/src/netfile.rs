//! Plain-text network descriptions.
//!
//! ```text
//! # comment
//! input <features>
//! conv <features> <extent> [relu|linear]
//! pool <extent> [mpf|plain|auto]
//! ```
//!
//! An extent is either one integer (a cube) or `XxYxZ`. Everything after a
//! `#` is ignored, as are blank lines.

use std::fmt::Write as _;

use swconv_core::layers::Activation;
use swconv_core::network::{LayerSpec, NetworkSpec, PoolChoice};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    /// 1-based; one past the last line for errors found at end of input.
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

fn count(tok: Option<&str>, what: &str, line: usize) -> Result<usize, ParseError> {
    let tok = tok.ok_or_else(|| err(line, format!("missing {what}")))?;
    let v: usize = tok.parse().map_err(|_| err(line, format!("{what} '{tok}' is not a non-negative integer")))?;
    if v == 0 {
        return Err(err(line, format!("{what} must be ≥1")));
    }
    Ok(v)
}

fn extent(tok: Option<&str>, line: usize) -> Result<[usize; 3], ParseError> {
    let tok = tok.ok_or_else(|| err(line, "missing extent"))?;
    let parts: Vec<&str> = tok.split('x').collect();
    match parts.as_slice() {
        [one] => Ok([count(Some(one), "extent", line)?; 3]),
        [x, y, z] => Ok([
            count(Some(x), "extent", line)?,
            count(Some(y), "extent", line)?,
            count(Some(z), "extent", line)?,
        ]),
        _ => Err(err(line, format!("extent '{tok}' is neither N nor XxYxZ"))),
    }
}

pub fn parse_network(text: &str) -> Result<NetworkSpec, ParseError> {
    let mut input = None;
    let mut layers = Vec::new();
    let mut last = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last = line;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut toks = body.split_whitespace();
        let keyword = toks.next().unwrap();
        match keyword {
            "input" => {
                if input.is_some() {
                    return Err(err(line, "duplicate input declaration"));
                }
                input = Some(count(toks.next(), "feature count", line)?);
            }
            "conv" | "pool" if input.is_none() => return Err(err(line, "missing input declaration")),
            "conv" => {
                let features = count(toks.next(), "feature count", line)?;
                let kernel = extent(toks.next(), line)?;
                let activation = match toks.next() {
                    None | Some("linear") => Activation::Identity,
                    Some("relu") => Activation::Relu,
                    Some(other) => return Err(err(line, format!("unknown activation '{other}'"))),
                };
                layers.push(LayerSpec::Conv {
                    features,
                    kernel,
                    activation,
                });
            }
            "pool" => {
                let window = extent(toks.next(), line)?;
                let choice = match toks.next() {
                    None | Some("auto") => PoolChoice::Auto,
                    Some("mpf") => PoolChoice::Fragments,
                    Some("plain") => PoolChoice::Plain,
                    Some(other) => return Err(err(line, format!("unknown pooling mode '{other}'"))),
                };
                layers.push(LayerSpec::Pool { window, choice });
            }
            other => return Err(err(line, format!("unknown keyword '{other}'"))),
        }
        if let Some(extra) = toks.next() {
            return Err(err(line, format!("unexpected '{extra}'")));
        }
    }
    let input = input.ok_or_else(|| err(last + 1, "missing input declaration"))?;
    if layers.is_empty() {
        return Err(err(last + 1, "network has no layers"));
    }
    NetworkSpec::new(input, layers).map_err(|e| err(last + 1, e.to_string()))
}

fn fmt_extent(e: [usize; 3]) -> String {
    if e[0] == e[1] && e[1] == e[2] {
        e[0].to_string()
    } else {
        format!("{}x{}x{}", e[0], e[1], e[2])
    }
}

pub fn format_network(net: &NetworkSpec) -> String {
    let mut out = format!("input {}\n", net.input_features);
    for l in &net.layers {
        match *l {
            LayerSpec::Conv {
                features,
                kernel,
                activation,
            } => {
                let act = match activation {
                    Activation::Relu => " relu",
                    Activation::Identity => "",
                };
                writeln!(out, "conv {features} {}{act}", fmt_extent(kernel)).unwrap();
            }
            LayerSpec::Pool { window, choice } => {
                let mode = match choice {
                    PoolChoice::Auto => "",
                    PoolChoice::Fragments => " mpf",
                    PoolChoice::Plain => " plain",
                };
                writeln!(out, "pool {}{mode}", fmt_extent(window)).unwrap();
            }
        }
    }
    out
}

/// Networks shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("n337", include_str!("../nets/n337.net")),
    ("n537", include_str!("../nets/n537.net")),
    ("n726", include_str!("../nets/n726.net")),
    ("n926", include_str!("../nets/n926.net")),
];

pub fn bundled(name: &str) -> Option<NetworkSpec> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_network(text).expect("bundled networks parse"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_networks_parse() {
        for (name, _) in BUNDLED {
            let net = bundled(name).unwrap();
            assert_eq!(net.input_features, 1);
            assert_eq!(net.pool_layers().len(), if name.ends_with("37") { 3 } else { 2 });
        }
    }
}
