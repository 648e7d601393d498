//! URI binding (`cpe:/part:vendor:product:version:update:edition:language`).
//!
//! The edition component may carry a tilde-packed group:
//! `[language]~edition~sw_edition~target_sw~target_hw~other`. The leading
//! slot is empty in the CPE 2.3 packing (language then follows as the seventh
//! component); a non-empty leading slot is read as the language, which is the
//! layout the IVA dictionary tooling emits (e.g.
//! `cpe:/a:microsoft:internet_explorer:8.*::en~-~~windows~x86~`).

use super::{is_part_token, AttributeValue, CpeUri, NamingError, Wfn};

const PREFIX_LEN: usize = "cpe:/".len();

fn malformed(uri: &CpeUri, reason: impl Into<String>) -> NamingError {
    NamingError::MalformedUri {
        input: uri.as_str().to_string(),
        reason: reason.into(),
    }
}

pub fn unbind_uri(uri: &CpeUri) -> Result<Wfn, NamingError> {
    let body = &uri.as_str()[PREFIX_LEN..];
    let mut wfn = Wfn::new();
    if body.is_empty() {
        return Ok(wfn);
    }
    let comps: Vec<&str> = body.split(':').collect();
    if comps.len() > 7 {
        return Err(malformed(uri, format!("{} components, at most 7 allowed", comps.len())));
    }
    let get = |i: usize| comps.get(i).copied().unwrap_or("");
    let decode = |text: &str| decode_component(text).map_err(|r| malformed(uri, r));

    wfn.part = decode(get(0))?;
    if let AttributeValue::Value(p) = &wfn.part {
        if !is_part_token(p) {
            return Err(malformed(uri, format!("invalid part {p:?}")));
        }
    }
    wfn.vendor = decode(get(1))?;
    wfn.product = decode(get(2))?;
    wfn.version = decode(get(3))?;
    wfn.update = decode(get(4))?;

    let edition = get(5);
    if edition.contains('~') {
        let slots: Vec<&str> = edition.split('~').collect();
        if slots.len() != 6 {
            return Err(malformed(uri, "packed edition must have exactly five tildes"));
        }
        let language = get(6);
        if !slots[0].is_empty() && !language.is_empty() {
            return Err(malformed(uri, "language given both in packed edition and as component 7"));
        }
        wfn.language = decode(if slots[0].is_empty() { language } else { slots[0] })?;
        wfn.edition = decode(slots[1])?;
        wfn.sw_edition = decode(slots[2])?;
        wfn.target_sw = decode(slots[3])?;
        wfn.target_hw = decode(slots[4])?;
        wfn.other = decode(slots[5])?;
    } else {
        wfn.edition = decode(edition)?;
        wfn.language = decode(get(6))?;
    }
    Ok(wfn)
}

fn decode_component(text: &str) -> Result<AttributeValue, String> {
    match text {
        "" => return Ok(AttributeValue::Any),
        "-" => return Ok(AttributeValue::Na),
        _ => {}
    }
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c == '%' {
            let hex: String = chars.by_ref().take(2).collect();
            let byte = (hex.len() == 2)
                .then(|| u8::from_str_radix(&hex, 16).ok())
                .flatten()
                .ok_or_else(|| format!("invalid percent-encoding %{hex}"))?;
            match byte {
                0x01 => out.push('?'),
                0x02 => out.push('*'),
                0x21..=0x7e => out.push(byte as char),
                _ => return Err(format!("percent-encoded byte %{hex} out of range")),
            }
        } else if c.is_whitespace() || c.is_control() {
            return Err(format!("unencoded whitespace or control character {c:?}"));
        } else {
            out.push(c);
        }
    }
    AttributeValue::string(out).map_err(|e| e.to_string())
}

fn encode_component(value: &AttributeValue) -> String {
    let text = match value {
        AttributeValue::Any => return String::new(),
        AttributeValue::Na => return "-".into(),
        AttributeValue::Value(s) => s,
    };
    if text == "-" {
        return "%2d".into();
    }
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            c if c.is_ascii_alphanumeric() => out.push(c),
            '.' | '-' | '_' | '*' | '?' => out.push(c),
            c if c.is_ascii() => out.push_str(&format!("%{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Binds a WFN to its URI form. Trailing ANY components are elided.
pub fn bind_to_uri(wfn: &Wfn) -> CpeUri {
    let extended_any = [&wfn.sw_edition, &wfn.target_sw, &wfn.target_hw, &wfn.other]
        .iter()
        .all(|v| v.is_any());
    let (edition, language) = if extended_any {
        (encode_component(&wfn.edition), encode_component(&wfn.language))
    } else {
        let packed = [
            &wfn.language,
            &wfn.edition,
            &wfn.sw_edition,
            &wfn.target_sw,
            &wfn.target_hw,
            &wfn.other,
        ]
        .iter()
        .map(|v| encode_component(v))
        .collect::<Vec<_>>()
        .join("~");
        (packed, String::new())
    };
    let comps = [
        encode_component(&wfn.part),
        encode_component(&wfn.vendor),
        encode_component(&wfn.product),
        encode_component(&wfn.version),
        encode_component(&wfn.update),
        edition,
        language,
    ];
    let joined = comps.join(":");
    CpeUri(format!("cpe:/{}", joined.trim_end_matches(':')))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{ie8, s};
    use super::*;

    fn unbind(text: &str) -> Result<Wfn, NamingError> {
        unbind_uri(&CpeUri::new(text).unwrap())
    }

    fn listing5() -> Wfn {
        Wfn {
            part: s("a"),
            vendor: s("microsoft"),
            product: s("internet_explorer"),
            version: s("8.*"),
            update: AttributeValue::Any,
            language: s("en"),
            edition: AttributeValue::Na,
            sw_edition: AttributeValue::Any,
            target_sw: s("windows"),
            target_hw: s("x86"),
            other: AttributeValue::Any,
        }
    }

    #[test]
    fn unbinds_packed_edition_with_leading_language() {
        let w = unbind("cpe:/a:microsoft:internet_explorer:8.*::en~-~~windows~x86~").unwrap();
        assert_eq!(w, listing5());
    }

    #[test]
    fn binds_packed_edition_byte_identical() {
        assert_eq!(
            bind_to_uri(&listing5()).as_str(),
            "cpe:/a:microsoft:internet_explorer:8.*::en~-~~windows~x86~"
        );
    }

    #[test]
    fn standard_packing_reads_language_from_component_seven() {
        let w = unbind("cpe:/a:microsoft:internet_explorer:8.*::~-~~windows~x86~:en").unwrap();
        assert_eq!(w, listing5());
        assert!(unbind("cpe:/a:m:p:1::fr~-~~windows~x86~:en").is_err());
    }

    #[test]
    fn listing_two_na_update() {
        let w = unbind("cpe:/a:microsoft:internet_explorer:8:-").unwrap();
        assert_eq!(w, ie8());
        assert_eq!(bind_to_uri(&w).as_str(), "cpe:/a:microsoft:internet_explorer:8:-");
    }

    #[test]
    fn firefox_short_uri() {
        let w = unbind("cpe:/a:mozilla:firefox:38.0").unwrap();
        assert_eq!(w.vendor, s("mozilla"));
        assert_eq!(w.version, s("38.0"));
        assert!(w.update.is_any() && w.other.is_any() && w.language.is_any());
    }

    #[test]
    fn maximal_elision() {
        let w = Wfn { part: s("a"), ..Wfn::new() };
        assert_eq!(bind_to_uri(&w).as_str(), "cpe:/a");
        assert_eq!(bind_to_uri(&Wfn::new()).as_str(), "cpe:/");
        assert_eq!(unbind("cpe:/").unwrap(), Wfn::new());
    }

    #[test]
    fn percent_decoding_and_reencoding() {
        let w = unbind("cpe:/a:at%26t:my%7eapp:1.0%2b").unwrap();
        assert_eq!(w.vendor, s("at&t"));
        assert_eq!(w.product, s("my~app"));
        assert_eq!(w.version, s("1.0+"));
        assert_eq!(bind_to_uri(&w).as_str(), "cpe:/a:at%26t:my%7eapp:1.0%2b");
        // %01 and %02 are the URI spellings of the ? and * wildcards.
        assert_eq!(unbind("cpe:/a:v:p:1.%02").unwrap().version, s("1.*"));
        assert_eq!(unbind("cpe:/a:v:p:1.%01").unwrap().version, s("1.?"));
    }

    #[test]
    fn lowercases_input() {
        let w = unbind("cpe:/A:Mozilla:FireFox:38.0").unwrap();
        assert_eq!(w.vendor, s("mozilla"));
        assert_eq!(w.product, s("firefox"));
    }

    #[test]
    fn lone_hyphen_value_is_not_na() {
        let w = Wfn { part: s("a"), vendor: s("v"), product: s("-"), ..Wfn::new() };
        let uri = bind_to_uri(&w);
        assert_eq!(uri.as_str(), "cpe:/a:v:%2d");
        assert_eq!(unbind_uri(&uri).unwrap(), w);
    }

    #[test]
    fn malformed_inputs() {
        assert!(unbind("cpe:/a:b:c:d:e:f:g:h").is_err());
        assert!(unbind("cpe:/x:vendor:product").is_err());
        assert!(unbind("cpe:/a:vendor:pro%zzduct").is_err());
        assert!(unbind("cpe:/a:vendor:pro%2").is_err());
        assert!(unbind("cpe:/a:vendor:pro duct").is_err());
        assert!(unbind("cpe:/a:vendor:product:1::~a~b").is_err());
        assert!(unbind("cpe:/a:vendor:product:%00").is_err());
    }

    #[test]
    fn empty_middle_components_are_any() {
        let w = unbind("cpe:/a:::1.0").unwrap();
        assert!(w.vendor.is_any() && w.product.is_any());
        assert_eq!(w.version, s("1.0"));
    }
}
