//! Streaming parser for NVD CVE XML 2.0 feeds (`nvd` / `entry`).

use std::io::Read;

use chrono::DateTime;
use quick_xml::events::Event;
use quick_xml::Reader;
use tracing::warn;

use super::{is_valid_cve_id, map_xml_error, open_stream, CveEntry, CveFeedParse, Diagnostic, IngestError, VulnerableCpe};
use crate::naming::CpeUri;

#[derive(Default)]
struct EntryBuilder {
    id_attr: Option<String>,
    cve_id: Option<String>,
    summary: String,
    published: Option<String>,
    score: Option<String>,
    products: Vec<String>,
}

/// Which text-bearing element we are inside, if any.
#[derive(Clone, Copy, PartialEq)]
enum Field {
    CveId,
    Summary,
    Published,
    Score,
    Product,
}

pub fn parse_cve_feed<R: Read>(source: R) -> Result<CveFeedParse, IngestError> {
    let mut reader = Reader::from_reader(open_stream(source)?);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut out = CveFeedParse::default();
    let mut entry: Option<EntryBuilder> = None;
    // local names of open elements inside the current entry
    let mut path: Vec<Vec<u8>> = Vec::new();
    let mut field: Option<(Field, String)> = None;
    let mut saw_root = false;

    loop {
        let pos = reader.buffer_position() as u64;
        let event = reader.read_event_into(&mut buf).map_err(|e| map_xml_error(e, pos))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let local = e.local_name().as_ref().to_vec();
                if !saw_root {
                    if local != b"nvd" {
                        return Err(IngestError::Document(format!(
                            "root element is <{}>, expected <nvd>",
                            String::from_utf8_lossy(&local)
                        )));
                    }
                    saw_root = true;
                    buf.clear();
                    continue;
                }
                if entry.is_none() {
                    if local == b"entry" {
                        out.entries_seen += 1;
                        let id_attr = e
                            .attributes()
                            .flatten()
                            .find(|a| a.key.local_name().as_ref() == b"id")
                            .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()));
                        let b = EntryBuilder { id_attr, ..Default::default() };
                        if is_empty {
                            finish_entry(b, &mut out);
                        } else {
                            entry = Some(b);
                        }
                    }
                } else if !is_empty {
                    let parent = path.last().map(Vec::as_slice);
                    field = match (local.as_slice(), parent) {
                        (b"cve-id", None) => Some(Field::CveId),
                        (b"summary", None) => Some(Field::Summary),
                        (b"published-datetime", None) => Some(Field::Published),
                        (b"score", Some(b"base_metrics")) => Some(Field::Score),
                        (b"product", Some(b"vulnerable-software-list")) => Some(Field::Product),
                        _ => None,
                    }
                    .map(|f| (f, String::new()));
                    path.push(local);
                }
            }
            Event::Text(ref t) => {
                if let Some((_, text)) = field.as_mut() {
                    let pos = reader.buffer_position() as u64;
                    text.push_str(&t.unescape().map_err(|e| map_xml_error(e, pos))?);
                }
            }
            Event::CData(ref t) => {
                if let Some((_, text)) = field.as_mut() {
                    text.push_str(&String::from_utf8_lossy(t));
                }
            }
            Event::End(_) => {
                if path.pop().is_some() {
                    if let (Some((f, text)), Some(b)) = (field.take(), entry.as_mut()) {
                        let text = text.trim().to_string();
                        match f {
                            Field::CveId => b.cve_id = Some(text),
                            Field::Summary => b.summary = text,
                            Field::Published => b.published = Some(text),
                            Field::Score => b.score = Some(text),
                            Field::Product => b.products.push(text),
                        }
                    }
                } else if let Some(b) = entry.take() {
                    finish_entry(b, &mut out);
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !saw_root {
        return Err(IngestError::Document("document has no <nvd> root element".into()));
    }
    Ok(out)
}

fn finish_entry(b: EntryBuilder, out: &mut CveFeedParse) {
    let id = b.cve_id.or(b.id_attr).unwrap_or_default();
    if !is_valid_cve_id(&id) {
        let subject = if id.is_empty() { format!("entry #{}", out.entries_seen) } else { id };
        warn!(entry = %subject, "skipping CVE entry with invalid id");
        out.skipped.push(Diagnostic { subject, reason: "invalid or missing CVE id".into() });
        return;
    }
    let published = b.published.as_deref().and_then(|p| match DateTime::parse_from_rfc3339(p) {
        Ok(t) => Some(t),
        Err(e) => {
            out.warnings.push(Diagnostic { subject: id.clone(), reason: format!("bad published-datetime {p:?}: {e}") });
            None
        }
    });
    let cvss_score = b.score.as_deref().and_then(|s| match s.parse::<f64>() {
        Ok(v) if (0.0..=10.0).contains(&v) => Some(v),
        _ => {
            out.warnings.push(Diagnostic { subject: id.clone(), reason: format!("bad CVSS score {s:?}") });
            None
        }
    });
    let mut vuln_software = Vec::with_capacity(b.products.len());
    for p in b.products {
        match CpeUri::new(p.as_str()).and_then(VulnerableCpe::parse) {
            Ok(v) => {
                if !vuln_software.contains(&v) {
                    vuln_software.push(v);
                }
            }
            Err(e) => {
                warn!(cve = %id, uri = %p, error = %e, "dropping unparsable vulnerable-software URI");
                out.warnings.push(Diagnostic { subject: format!("{id} {p}"), reason: e.to_string() });
            }
        }
    }
    out.entries.push(CveEntry { id, summary: b.summary, published, cvss_score, vuln_software });
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"<?xml version='1.0' encoding='UTF-8'?>
<nvd xmlns:cvss="http://scap.nist.gov/schema/cvss-v2/0.2" xmlns:vuln="http://scap.nist.gov/schema/vulnerability/0.4" xmlns="http://scap.nist.gov/schema/feed/vulnerability/2.0" nvd_xml_version="2.0" pub_date="2017-02-14T03:00:00">
  <entry id="CVE-2016-0006">
    <vuln:vulnerable-configuration id="http://nvd.nist.gov/">
      <cpe-lang:logical-test operator="OR" negate="false" xmlns:cpe-lang="http://cpe.mitre.org/language/2.0">
        <cpe-lang:fact-ref name="cpe:/o:microsoft:windows_10:-"/>
      </cpe-lang:logical-test>
    </vuln:vulnerable-configuration>
    <vuln:vulnerable-software-list>
      <vuln:product>cpe:/o:microsoft:windows_10:-</vuln:product>
      <vuln:product>cpe:/o:microsoft:windows_8.1:-</vuln:product>
      <vuln:product>cpe:/o:microsoft:windows_7::sp1</vuln:product>
    </vuln:vulnerable-software-list>
    <vuln:cve-id>CVE-2016-0006</vuln:cve-id>
    <vuln:published-datetime>2016-01-13T00:59:03.727-05:00</vuln:published-datetime>
    <vuln:cvss>
      <cvss:base_metrics>
        <cvss:score>7.2</cvss:score>
        <cvss:access-vector>LOCAL</cvss:access-vector>
      </cvss:base_metrics>
    </vuln:cvss>
    <vuln:summary>The sandbox implementation in Microsoft Windows Vista SP2, Windows Server 2008 SP2 and R2 SP1, Windows 7 SP1, Windows 8.1, Windows Server 2012 Gold and R2, Windows RT 8.1, and Windows 10 Gold and 1511 mishandles reparse points, which allows local users to gain privileges via a crafted application, aka "Windows Mount Point Elevation of Privilege Vulnerability."</vuln:summary>
  </entry>
  <entry id="CVE-2016-9748">
    <vuln:cve-id>CVE-2016-9748</vuln:cve-id>
    <vuln:summary>IBM Rational DOORS Next Generation 5.0 and 6.0 is vulnerable to cross-site scripting.</vuln:summary>
  </entry>
</nvd>"#;

    #[test]
    fn parses_fig2_entry() {
        let parsed = parse_cve_feed(FIG2.as_bytes()).unwrap();
        assert_eq!(parsed.entries_seen, 2);
        let e = &parsed.entries[0];
        assert_eq!(e.id, "CVE-2016-0006");
        assert!(e.summary.starts_with("The sandbox implementation"));
        assert!(e.summary.contains("\"Windows Mount Point"));
        assert_eq!(e.cvss_score, Some(7.2));
        assert_eq!(e.vuln_software.len(), 3);
        assert_eq!(e.vuln_software[2].wfn.update.as_str(), Some("sp1"));
        assert_eq!(e.published.unwrap().to_rfc3339(), "2016-01-13T00:59:03.727-05:00");
    }

    #[test]
    fn entry_without_software_list_is_kept() {
        let parsed = parse_cve_feed(FIG2.as_bytes()).unwrap();
        let e = &parsed.entries[1];
        assert_eq!(e.id, "CVE-2016-9748");
        assert!(e.vuln_software.is_empty());
        assert_eq!(e.cvss_score, None);
    }

    #[test]
    fn empty_feed() {
        let parsed = parse_cve_feed(&b"<nvd xmlns=\"x\"/>"[..]).unwrap();
        assert!(parsed.entries.is_empty());
    }

    #[test]
    fn bad_entries_and_uris() {
        let xml = r#"<nvd>
  <entry id="CVE-2017-0001"><vuln:vulnerable-software-list><vuln:product>cpe:/a:ok:ok:1</vuln:product><vuln:product>cpe:/z:bad</vuln:product><vuln:product>cpe:/a:ok:ok:1</vuln:product></vuln:vulnerable-software-list><vuln:summary>x</vuln:summary><vuln:cvss><cvss:base_metrics><cvss:score>11.5</cvss:score></cvss:base_metrics></vuln:cvss></entry>
  <entry id="NOT-AN-ID"><vuln:summary>y</vuln:summary></entry>
  <entry/>
</nvd>"#;
        let parsed = parse_cve_feed(xml.as_bytes()).unwrap();
        assert_eq!(parsed.entries_seen, 3);
        assert_eq!(parsed.entries.len(), 1);
        assert_eq!(parsed.skipped.len(), 2);
        assert_eq!(parsed.entries[0].vuln_software.len(), 1);
        assert_eq!(parsed.entries[0].cvss_score, None);
        assert_eq!(parsed.warnings.len(), 2);
    }

    #[test]
    fn not_a_feed() {
        assert!(matches!(parse_cve_feed(&b"<cpe-list/>"[..]), Err(IngestError::Document(_))));
        assert!(matches!(parse_cve_feed(&b"<nvd><entry></nvd>"[..]), Err(IngestError::Document(_))));
    }
}
