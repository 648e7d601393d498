//! Textual WFN form: `wfn:[part="a",vendor="microsoft",...,update=NA]`.
//!
//! All eleven attributes are written in canonical order. String values are
//! double-quoted with `"` and `\` backslash-escaped; logical values are bare
//! `ANY`/`NA`. On input, omitted attributes default to ANY.

use super::{is_part_token, AttributeValue, NamingError, Wfn, ATTRIBUTE_NAMES};

pub fn format_wfn(wfn: &Wfn) -> String {
    let body: Vec<String> = ATTRIBUTE_NAMES
        .iter()
        .zip(wfn.attributes())
        .map(|(name, value)| match value {
            AttributeValue::Any => format!("{name}=ANY"),
            AttributeValue::Na => format!("{name}=NA"),
            AttributeValue::Value(s) => {
                let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
                format!("{name}=\"{escaped}\"")
            }
        })
        .collect();
    format!("wfn:[{}]", body.join(","))
}

pub fn parse_wfn(text: &str) -> Result<Wfn, NamingError> {
    let malformed = |reason: &str| NamingError::MalformedWfn {
        input: text.to_string(),
        reason: reason.to_string(),
    };
    let t = text.trim();
    let body = t
        .get(..5)
        .filter(|p| p.eq_ignore_ascii_case("wfn:["))
        .and_then(|_| t[5..].strip_suffix(']'))
        .ok_or_else(|| malformed("expected wfn:[...]"))?;

    let mut wfn = Wfn::new();
    let mut seen = [false; 11];
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let eq = rest.find('=').ok_or_else(|| malformed("attribute without '='"))?;
        let name = rest[..eq].trim().to_ascii_lowercase();
        let idx = ATTRIBUTE_NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| malformed(&format!("unknown attribute {name:?}")))?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(malformed(&format!("duplicate attribute {name:?}")));
        }
        rest = rest[eq + 1..].trim_start();
        let (value, after) = if let Some(quoted) = rest.strip_prefix('"') {
            let mut out = String::new();
            let mut chars = quoted.char_indices();
            let mut end = None;
            while let Some((i, c)) = chars.next() {
                match c {
                    '\\' => out.extend(chars.next().map(|(_, c)| c)),
                    '"' => {
                        end = Some(i + 1);
                        break;
                    }
                    c => out.push(c),
                }
            }
            let end = end.ok_or_else(|| malformed("unterminated quoted value"))?;
            let value = AttributeValue::string(out).map_err(|e| malformed(&e.to_string()))?;
            (value, &quoted[end..])
        } else {
            let end = rest.find(',').unwrap_or(rest.len());
            let value = match rest[..end].trim() {
                "ANY" | "any" => AttributeValue::Any,
                "NA" | "na" => AttributeValue::Na,
                other => return Err(malformed(&format!("unquoted value {other:?}"))),
            };
            (value, &rest[end..])
        };
        *wfn.attributes_mut().into_iter().nth(idx).unwrap() = value;
        rest = after.trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        } else if !rest.is_empty() {
            return Err(malformed("expected ',' between attributes"));
        }
    }
    if let AttributeValue::Value(p) = &wfn.part {
        if !is_part_token(p) {
            return Err(malformed("part must be one of a, o, h"));
        }
    }
    Ok(wfn)
}
