//! Parser for transformation files: the `[indices]`, `[phi]`, `[alpha]`, and
//! `[beta]` sections describing a candidate coordinate and input change.
//!
//! Expressions are kept as source strings here; the caller parses them in the
//! scope of the model the transformation is checked against.

use flatcheck_core::StructureIndices;

/// A transformation file, with expression entries still unparsed.
#[derive(Debug)]
pub struct MapFile {
    pub indices: StructureIndices,
    pub phi: Vec<String>,
    pub alpha: Vec<String>,
    pub beta: Vec<Vec<String>>,
}

/// Parse the text of a transformation file.
///
/// Comment (`#`) and blank lines are ignored everywhere. `[indices]` holds
/// `key = value` pairs (`k_xi` takes a space- or comma-separated list); the
/// other sections hold one expression per line, with `[beta]` rows split on
/// commas.
pub fn parse_map_file(text: &str) -> Result<MapFile, String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Section {
        None,
        Indices,
        Phi,
        Alpha,
        Beta,
    }

    let mut section = Section::None;
    let mut m = None;
    let mut s = None;
    let mut k_zeta = None;
    let mut k_chi = None;
    let mut k_xi: Option<Vec<usize>> = None;
    let mut phi = Vec::new();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: &str| format!("line {}: {msg}", lineno + 1);

        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name.trim() {
                "indices" => Section::Indices,
                "phi" => Section::Phi,
                "alpha" => Section::Alpha,
                "beta" => Section::Beta,
                other => return Err(at(&format!("unknown section [{other}]"))),
            };
            continue;
        }

        match section {
            Section::None => {
                return Err(at("content before the first section header"));
            }
            Section::Indices => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| at("expected `key = value`"))?;
                let value = value.trim();
                let parse_one = |v: &str| {
                    v.parse::<usize>()
                        .map_err(|_| at(&format!("not an unsigned integer: {v:?}")))
                };
                match key.trim() {
                    "m" => m = Some(parse_one(value)?),
                    "s" => s = Some(parse_one(value)?),
                    "k_zeta" => k_zeta = Some(parse_one(value)?),
                    "k_chi" => k_chi = Some(parse_one(value)?),
                    "k_xi" => {
                        let entries = value
                            .split(|c: char| c == ',' || c.is_whitespace())
                            .filter(|v| !v.is_empty())
                            .map(parse_one)
                            .collect::<Result<Vec<_>, _>>()?;
                        k_xi = Some(entries);
                    }
                    other => return Err(at(&format!("unknown index key {other:?}"))),
                }
            }
            Section::Phi => phi.push(line.to_string()),
            Section::Alpha => alpha.push(line.to_string()),
            Section::Beta => {
                let row: Vec<String> = line
                    .split(',')
                    .map(|e| e.trim().to_string())
                    .collect();
                if row.iter().any(|e| e.is_empty()) {
                    return Err(at("empty entry in a [beta] row"));
                }
                beta.push(row);
            }
        }
    }

    let missing = |what: &str| format!("missing {what}");
    let indices = StructureIndices {
        m: m.ok_or_else(|| missing("`m` in [indices]"))?,
        s: s.ok_or_else(|| missing("`s` in [indices]"))?,
        k_zeta: k_zeta.ok_or_else(|| missing("`k_zeta` in [indices]"))?,
        k_chi: k_chi.ok_or_else(|| missing("`k_chi` in [indices]"))?,
        k_xi: k_xi.ok_or_else(|| missing("`k_xi` in [indices]"))?,
    };
    if phi.is_empty() {
        return Err(missing("[phi] section"));
    }
    if alpha.is_empty() {
        return Err(missing("[alpha] section"));
    }
    if beta.is_empty() {
        return Err(missing("[beta] section"));
    }
    let width = beta[0].len();
    if beta.iter().any(|row| row.len() != width) {
        return Err("ragged [beta] rows".to_string());
    }
    if beta.len() != alpha.len() || width != alpha.len() {
        return Err(format!(
            "[alpha] has {} entries but [beta] is {}x{}; both must be square in the input count",
            alpha.len(),
            beta.len(),
            width
        ));
    }
    Ok(MapFile {
        indices,
        phi,
        alpha,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# a 2-state identity-ish example
[indices]
m = 2
s = 0
k_zeta = 1
k_chi = 2
k_xi = 1, 0 0

[phi]
x1
x2 + x1^2

[alpha]
0
0
0

[beta]
1, 0, 0
0, 1, 0
0, 0, 1
";

    #[test]
    fn parses_a_complete_file() {
        let mf = parse_map_file(GOOD).unwrap();
        assert_eq!(mf.indices.m, 2);
        assert_eq!(mf.indices.k_xi, vec![1, 0, 0]);
        assert_eq!(mf.phi.len(), 2);
        assert_eq!(mf.alpha.len(), 3);
        assert_eq!(mf.beta.len(), 3);
        assert_eq!(mf.beta[1], vec!["0", "1", "0"]);
    }

    #[test]
    fn rejects_missing_keys_and_ragged_rows() {
        assert!(parse_map_file("[phi]\nx1\n").unwrap_err().contains("missing"));
        let ragged = GOOD.replace("0, 1, 0", "0, 1");
        assert!(parse_map_file(&ragged).unwrap_err().contains("ragged"));
        let junk = GOOD.replace("m = 2", "m = two");
        assert!(parse_map_file(&junk).unwrap_err().contains("unsigned"));
    }

    #[test]
    fn rejects_content_outside_sections() {
        assert!(parse_map_file("x1 + x2\n").unwrap_err().contains("before the first section"));
    }
}
