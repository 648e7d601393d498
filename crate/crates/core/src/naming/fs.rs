//! Formatted-string binding (`cpe:2.3:` followed by eleven fields).

use super::{is_part_token, AttributeValue, FormattedString, NamingError, Wfn};

const PREFIX_LEN: usize = "cpe:2.3:".len();

pub fn unbind_formatted_string(fs: &FormattedString) -> Result<Wfn, NamingError> {
    let malformed = |reason: String| NamingError::MalformedFormattedString {
        input: fs.as_str().to_string(),
        reason,
    };
    let fields = split_fields(&fs.as_str()[PREFIX_LEN..]).map_err(malformed)?;
    if fields.len() != 11 {
        return Err(malformed(format!("{} fields, expected 11", fields.len())));
    }
    let mut wfn = Wfn::new();
    for (slot, field) in wfn.attributes_mut().into_iter().zip(&fields) {
        *slot = decode_field(field).map_err(malformed)?;
    }
    if let AttributeValue::Value(p) = &wfn.part {
        if !is_part_token(p) {
            return Err(malformed(format!("invalid part {p:?}")));
        }
    }
    Ok(wfn)
}

/// Splits on colons not preceded by an escaping backslash. Fields keep their escapes.
fn split_fields(body: &str) -> Result<Vec<String>, String> {
    let mut fields = vec![String::new()];
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                let next = chars.next().ok_or("dangling escape at end of input")?;
                let field = fields.last_mut().unwrap();
                field.push('\\');
                field.push(next);
            }
            ':' => fields.push(String::new()),
            c => fields.last_mut().unwrap().push(c),
        }
    }
    Ok(fields)
}

fn decode_field(field: &str) -> Result<AttributeValue, String> {
    match field {
        "*" => return Ok(AttributeValue::Any),
        "-" => return Ok(AttributeValue::Na),
        "" => return Err("empty field".into()),
        _ => {}
    }
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            // split_fields guarantees a following character
            out.extend(chars.next());
        } else {
            out.push(c);
        }
    }
    AttributeValue::string(out).map_err(|e| e.to_string())
}

fn encode_field(value: &AttributeValue) -> String {
    let text = match value {
        AttributeValue::Any => return "*".into(),
        AttributeValue::Na => return "-".into(),
        AttributeValue::Value(s) => s,
    };
    if text == "-" || text == "*" {
        return format!("\\{text}");
    }
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            c if c.is_ascii_alphanumeric() || !c.is_ascii() => out.push(c),
            '_' | '.' | '-' | '*' | '?' => out.push(c),
            c => {
                out.push('\\');
                out.push(c);
            }
        }
    }
    out
}

pub fn bind_to_formatted_string(wfn: &Wfn) -> FormattedString {
    let fields: Vec<String> = wfn.attributes().iter().map(|v| encode_field(v)).collect();
    FormattedString(format!("cpe:2.3:{}", fields.join(":")))
}
