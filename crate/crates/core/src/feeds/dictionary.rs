//! Streaming parser for the CPE 2.3 dictionary XML (`cpe-list` / `cpe-item`).

use std::io::Read;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use tracing::warn;

use super::{map_xml_error, open_stream, CpeDictEntry, DeprecationReason, Diagnostic, DictionaryParse, IngestError};
use crate::naming::{bind_to_uri, parse_any, unbind_formatted_string, CpeUri, FormattedString};

#[derive(Default)]
struct ItemBuilder {
    name: Option<String>,
    deprecated: bool,
    deprecated_by: Option<String>,
    reason: Option<String>,
    titles: Vec<(Option<String>, String)>,
    formatted: Option<String>,
}

fn attr(e: &BytesStart, local: &[u8]) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.local_name().as_ref() == local)
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

fn title_lang(e: &BytesStart) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.as_ref() == b"xml:lang" || a.key.local_name().as_ref() == b"lang")
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

/// Parses a CPE dictionary document. Unusable `cpe-item`s are skipped and reported.
pub fn parse_cpe_dictionary<R: Read>(source: R) -> Result<DictionaryParse, IngestError> {
    let mut reader = Reader::from_reader(open_stream(source)?);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut out = DictionaryParse::default();
    let mut item: Option<ItemBuilder> = None;
    let mut title: Option<(Option<String>, String)> = None;
    let mut saw_root = false;

    loop {
        let pos = reader.buffer_position() as u64;
        let event = reader.read_event_into(&mut buf).map_err(|e| map_xml_error(e, pos))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let name = e.local_name();
                match name.as_ref() {
                    b"cpe-list" if !saw_root => saw_root = true,
                    _ if !saw_root => {
                        return Err(IngestError::Document(format!(
                            "root element is <{}>, expected <cpe-list>",
                            String::from_utf8_lossy(name.as_ref())
                        )));
                    }
                    b"cpe-item" => {
                        out.items_seen += 1;
                        let b = ItemBuilder {
                            name: attr(e, b"name"),
                            deprecated: attr(e, b"deprecated").is_some_and(|v| v.trim() == "true"),
                            deprecated_by: attr(e, b"deprecated_by"),
                            ..Default::default()
                        };
                        if is_empty {
                            finish_item(b, &mut out);
                        } else {
                            item = Some(b);
                        }
                    }
                    b"title" if item.is_some() && !is_empty => title = Some((title_lang(e), String::new())),
                    b"cpe23-item" => {
                        if let Some(b) = item.as_mut() {
                            b.formatted = attr(e, b"name");
                        }
                    }
                    b"deprecation" => {
                        if let Some(b) = item.as_mut() {
                            b.deprecated = true;
                        }
                    }
                    b"deprecated-by" => {
                        if let Some(b) = item.as_mut() {
                            b.deprecated = true;
                            if b.deprecated_by.is_none() {
                                b.deprecated_by = attr(e, b"name");
                            }
                            b.reason = attr(e, b"type");
                        }
                    }
                    _ => {}
                }
            }
            Event::Text(ref t) => {
                if let Some((_, text)) = title.as_mut() {
                    let pos = reader.buffer_position() as u64;
                    text.push_str(&t.unescape().map_err(|e| map_xml_error(e, pos))?);
                }
            }
            Event::CData(ref t) => {
                if let Some((_, text)) = title.as_mut() {
                    text.push_str(&String::from_utf8_lossy(t));
                }
            }
            Event::End(ref e) => match e.local_name().as_ref() {
                b"title" => {
                    if let (Some(t), Some(b)) = (title.take(), item.as_mut()) {
                        b.titles.push(t);
                    }
                }
                b"cpe-item" => {
                    if let Some(b) = item.take() {
                        finish_item(b, &mut out);
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !saw_root {
        return Err(IngestError::Document("document has no <cpe-list> root element".into()));
    }
    Ok(out)
}

fn finish_item(b: ItemBuilder, out: &mut DictionaryParse) {
    let subject = b
        .name
        .clone()
        .or_else(|| b.formatted.clone())
        .unwrap_or_else(|| format!("cpe-item #{}", out.items_seen));
    let mut skip = |reason: String| {
        warn!(item = %subject, %reason, "skipping dictionary item");
        out.skipped.push(Diagnostic { subject: subject.clone(), reason });
    };

    let formatted = match b.formatted.as_deref().map(FormattedString::new).transpose() {
        Ok(f) => f,
        Err(e) => return skip(e.to_string()),
    };
    let uri = match (&b.name, &formatted) {
        (Some(name), _) => CpeUri::new(name.trim()),
        (None, Some(fs)) => unbind_formatted_string(fs).map(|w| bind_to_uri(&w)),
        (None, None) => return skip("cpe-item has neither a URI nor a formatted string".into()),
    };
    let (uri, wfn) = match uri.and_then(|u| u.to_wfn().map(|w| (u, w))) {
        Ok(pair) => pair,
        Err(e) => return skip(e.to_string()),
    };

    let deprecated_by = match b.deprecated_by.as_deref().map(parse_any) {
        None => None,
        Some(Ok(target)) => Some(bind_to_uri(&target)),
        Some(Err(e)) => {
            let reason = format!("unusable deprecated-by target: {e}");
            warn!(item = %uri, %reason, "dictionary item");
            out.warnings.push(Diagnostic { subject: uri.to_string(), reason });
            None
        }
    };
    let deprecated = b.deprecated || deprecated_by.is_some();
    let title = b
        .titles
        .iter()
        .find(|(lang, _)| lang.as_deref().is_some_and(|l| l.eq_ignore_ascii_case("en-us")))
        .or_else(|| b.titles.first())
        .map(|(_, t)| t.trim().to_string())
        .unwrap_or_default();

    out.entries.push(CpeDictEntry {
        uri,
        formatted,
        title,
        wfn,
        deprecated,
        deprecated_by,
        deprecation_reason: deprecated.then(|| {
            b.reason
                .as_deref()
                .map(DeprecationReason::from_attr)
                .unwrap_or(DeprecationReason::Unspecified)
        }),
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIREFOX: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<cpe-list xmlns="http://cpe.mitre.org/dictionary/2.0" xmlns:cpe-23="http://scap.nist.gov/schema/cpe-extension/2.3">
  <generator><product_name>National Vulnerability Database (NVD)</product_name></generator>
  <cpe-item name="cpe:/a:mozilla:firefox:38.0">
    <title xml:lang="ja-JP">Mozilla Firefox 38.0 (ja)</title>
    <title xml:lang="en-US">Mozilla Firefox 38.0</title>
    <references>
      <reference href="https://www.mozilla.org/en-US/firefox/38.0/releasenotes/">Version release notes</reference>
    </references>
    <cpe-23:cpe23-item name="cpe:2.3:a:mozilla:firefox:38.0:*:*:*:*:*:*:*"/>
  </cpe-item>
</cpe-list>"#;

    #[test]
    fn parses_firefox_entry() {
        let parsed = parse_cpe_dictionary(FIREFOX.as_bytes()).unwrap();
        assert_eq!(parsed.items_seen, 1);
        let e = &parsed.entries[0];
        assert_eq!(e.uri.as_str(), "cpe:/a:mozilla:firefox:38.0");
        assert_eq!(e.title, "Mozilla Firefox 38.0");
        assert!(!e.deprecated);
        assert_eq!(e.formatted.as_ref().unwrap().to_wfn().unwrap(), e.wfn);
    }

    #[test]
    fn empty_list() {
        let parsed = parse_cpe_dictionary(&b"<cpe-list></cpe-list>"[..]).unwrap();
        assert!(parsed.entries.is_empty());
        assert_eq!(parsed.items_seen, 0);
    }

    #[test]
    fn deprecation_via_cpe23_extension() {
        let xml = r#"<cpe-list xmlns:cpe-23="x">
  <cpe-item name="cpe:/a:adobe:flash_playe_for_linux:9.0.115.0" deprecated="true" deprecation_date="2010-12-28T17:36:02.240-05:00">
    <title xml:lang="en-US">Adobe Flash Playe for Linux 9.0.115.0</title>
    <cpe-23:cpe23-item name="cpe:2.3:a:adobe:flash_playe_for_linux:9.0.115.0:*:*:*:*:*:*:*">
      <cpe-23:deprecation date="2010-12-28T17:36:02.240-05:00">
        <cpe-23:deprecated-by name="cpe:2.3:a:adobe:flash_player_for_linux:9.0.115.0:*:*:*:*:*:*:*" type="NAME_CORRECTION"/>
      </cpe-23:deprecation>
    </cpe-23:cpe23-item>
  </cpe-item>
  <cpe-item name="cpe:/a:adobe:flash_player_for_linux:9.0.115.0">
    <title xml:lang="en-US">Adobe Flash Player for Linux 9.0.115.0</title>
  </cpe-item>
</cpe-list>"#;
        let parsed = parse_cpe_dictionary(xml.as_bytes()).unwrap();
        assert_eq!(parsed.entries.len(), 2);
        let typo = &parsed.entries[0];
        assert!(typo.deprecated);
        assert_eq!(
            typo.deprecated_by.as_ref().unwrap().as_str(),
            "cpe:/a:adobe:flash_player_for_linux:9.0.115.0"
        );
        assert_eq!(typo.deprecation_reason, Some(DeprecationReason::NameCorrection));
        assert!(!parsed.entries[1].deprecated);
        assert_eq!(parsed.entries[1].deprecation_reason, None);
    }

    #[test]
    fn legacy_deprecated_by_attribute() {
        let xml = r#"<cpe-list><cpe-item name="cpe:/a:v:old" deprecated="true" deprecated_by="cpe:/a:v:new"><title>Old</title></cpe-item></cpe-list>"#;
        let parsed = parse_cpe_dictionary(xml.as_bytes()).unwrap();
        assert_eq!(parsed.entries[0].deprecated_by.as_ref().unwrap().as_str(), "cpe:/a:v:new");
        assert_eq!(parsed.entries[0].deprecation_reason, Some(DeprecationReason::Unspecified));
    }

    #[test]
    fn bad_items_are_counted_not_fatal() {
        let xml = r#"<cpe-list>
  <cpe-item name="cpe:/a:good:one:1"><title>ok</title></cpe-item>
  <cpe-item name="cpe:/q:bad:part"><title>bad part</title></cpe-item>
  <cpe-item name="not a cpe"><title>garbage</title></cpe-item>
  <cpe-item><title>no name</title></cpe-item>
  <cpe-item><title>fs only</title><cpe23-item name="cpe:2.3:a:fs:only:2:*:*:*:*:*:*:*"/></cpe-item>
  <cpe-item name="cpe:/a:v:p" deprecated_by="cpe:/z:broken"><title>bad target</title></cpe-item>
  <future-element foo="bar"><child/></future-element>
</cpe-list>"#;
        let parsed = parse_cpe_dictionary(xml.as_bytes()).unwrap();
        assert_eq!(parsed.items_seen, 6);
        assert_eq!(parsed.entries.len(), 3);
        assert_eq!(parsed.skipped.len(), 3);
        assert_eq!(parsed.entries.len() + parsed.skipped.len(), parsed.items_seen);
        assert_eq!(parsed.entries[1].uri.as_str(), "cpe:/a:fs:only:2");
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.entries[2].deprecated_by.is_none());
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(
            parse_cpe_dictionary(&b"<cpe-list><cpe-item></cpe-list>"[..]),
            Err(IngestError::Document(_))
        ));
        assert!(matches!(parse_cpe_dictionary(&b"<nvd></nvd>"[..]), Err(IngestError::Document(_))));
        assert!(matches!(parse_cpe_dictionary(&b""[..]), Err(IngestError::Document(_))));
    }
}
