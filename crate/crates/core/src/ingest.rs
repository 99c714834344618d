//! Common Log Format access logs to item streams.
//!
//! Item identity is the full request target, query string included,
//! case-sensitive. Malformed lines are counted and skipped.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use sha2::{Digest, Sha256};

use crate::hashing::ItemId;
use crate::histogram::EmpiricalDistribution;

/// Bumped whenever [`target_to_item`] changes; written into stream descriptors.
pub const ITEM_ID_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub raw_line: String,
    pub request_target: String,
    pub valid: bool,
}

/// Extracts the target of the quoted request field.
///
/// `"GET /x HTTP/1.0"` and `"GET /x"` both give `/x`; a lone token starting
/// with `/` is taken as the target. Anything else is invalid.
pub fn parse_clf_line(line: &str) -> LogRecord {
    let line = line.trim_end_matches(['\r', '\n']);
    let target = request_field(line).and_then(|req| {
        let mut tokens = req.split_ascii_whitespace();
        match (tokens.next(), tokens.next()) {
            (Some(_method), Some(target)) => Some(target),
            (Some(only), None) if only.starts_with('/') => Some(only),
            _ => None,
        }
    });
    LogRecord {
        raw_line: line.to_string(),
        request_target: target.unwrap_or_default().to_string(),
        valid: target.is_some(),
    }
}

fn request_field(line: &str) -> Option<&str> {
    let open = line.find('"')?;
    let close = line.rfind('"')?;
    (close > open).then(|| &line[open + 1..close])
}

/// First 8 bytes of SHA-256 over the target, big-endian.
pub fn target_to_item(target: &str) -> ItemId {
    let digest = Sha256::digest(target.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub items: u64,
    pub distinct: u64,
    pub max_frequency: u64,
    pub malformed: u64,
}

impl TraceStats {
    pub fn of_histogram(h: &EmpiricalDistribution, malformed: u64) -> Self {
        Self { items: h.total(), distinct: h.distinct() as u64, max_frequency: h.max_count(), malformed }
    }

    /// `metric,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "metric,value")?;
        writeln!(w, "items,{}", self.items)?;
        writeln!(w, "distinct,{}", self.distinct)?;
        writeln!(w, "max_frequency,{}", self.max_frequency)?;
        writeln!(w, "malformed,{}", self.malformed)
    }
}

pub fn trace_stats<I: IntoIterator<Item = LogRecord>>(records: I) -> TraceStats {
    let mut hist = EmpiricalDistribution::default();
    let mut malformed = 0;
    for r in records {
        if r.valid {
            hist.push(target_to_item(&r.request_target));
        } else {
            malformed += 1;
        }
    }
    TraceStats::of_histogram(&hist, malformed)
}

/// Item stream plus histogram from one pass over a log.
#[derive(Debug, Clone)]
pub struct IngestedTrace {
    pub items: Vec<ItemId>,
    pub histogram: EmpiricalDistribution,
    pub malformed: u64,
}

impl IngestedTrace {
    pub fn stats(&self) -> TraceStats {
        TraceStats::of_histogram(&self.histogram, self.malformed)
    }
}

/// Reads lines as bytes so that stray non-UTF-8 bytes only affect their own line.
pub fn ingest_reader<R: BufRead>(mut reader: R) -> io::Result<IngestedTrace> {
    let mut items = Vec::new();
    let mut histogram = EmpiricalDistribution::default();
    let mut malformed = 0;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let line = String::from_utf8_lossy(&buf);
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_clf_line(&line);
        if rec.valid {
            let id = target_to_item(&rec.request_target);
            items.push(id);
            histogram.push(id);
        } else {
            malformed += 1;
        }
    }
    Ok(IngestedTrace { items, histogram, malformed })
}

/// Opens a plain or gzip-compressed file, sniffing the gzip magic bytes.
pub fn open_maybe_gzip(path: impl AsRef<Path>) -> io::Result<Box<dyn BufRead>> {
    let mut f = BufReader::new(File::open(path)?);
    let head = f.fill_buf()?;
    if head.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(f))
    }
}

pub fn ingest_file(path: impl AsRef<Path>) -> io::Result<IngestedTrace> {
    ingest_reader(open_maybe_gzip(path)?)
}

/// `rank,frequency` rows, most frequent first, ranks from 1.
pub fn write_rank_frequency_csv<W: Write>(h: &EmpiricalDistribution, mut w: W) -> io::Result<()> {
    writeln!(w, "rank,frequency")?;
    for (i, f) in h.rank_frequencies().iter().enumerate() {
        writeln!(w, "{},{}", i + 1, f)?;
    }
    Ok(())
}

/// Published statistics for the public web-server traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownTrace {
    pub name: &'static str,
    /// Usual archive file name.
    pub file: &'static str,
    pub items: u64,
    pub distinct: u64,
    pub max_frequency: u64,
}

pub const KNOWN_TRACES: [KnownTrace; 5] = [
    KnownTrace { name: "NASA (July)", file: "NASA_access_log_Jul95", items: 1_891_715, distinct: 81_983, max_frequency: 17_572 },
    KnownTrace { name: "NASA (August)", file: "NASA_access_log_Aug95", items: 1_569_898, distinct: 75_058, max_frequency: 6_530 },
    KnownTrace { name: "ClarkNet (August)", file: "clarknet_access_log_Aug28", items: 1_654_929, distinct: 90_516, max_frequency: 6_075 },
    KnownTrace { name: "ClarkNet (September)", file: "clarknet_access_log_Sep4", items: 1_673_794, distinct: 94_787, max_frequency: 7_239 },
    KnownTrace { name: "Saskatchewan", file: "UofS_access_log", items: 2_408_625, distinct: 162_523, max_frequency: 52_695 },
];

/// In-memory variant of [`ingest_reader`].
pub fn ingest_str(text: &str) -> IngestedTrace {
    ingest_reader(text.as_bytes()).expect("reading from memory cannot fail")
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn parses_clf_lines() {
        let r = parse_clf_line(r#"host - - [01/Jul/1995:00:00:01 -0400] "GET /history/apollo/ HTTP/1.0" 200 6245"#);
        assert!(r.valid);
        assert_eq!(r.request_target, "/history/apollo/");
        let r = parse_clf_line(r#"h - - [x] "GET /x" 200 1"#);
        assert!(r.valid);
        assert_eq!(r.request_target, "/x");
        let r = parse_clf_line(r#"h - - [x] "/lone" 200 1"#);
        assert_eq!(r.request_target, "/lone");
        for bad in ["", "no quotes at all", r#"h "" 200"#, r#"h "GET"#, r#"h "garbage" 400 0"#] {
            let r = parse_clf_line(bad);
            assert!(!r.valid, "{bad}");
            assert!(r.request_target.is_empty());
        }
    }

    #[test]
    fn embedded_quotes_stay_in_target() {
        let r = parse_clf_line(r#"h - - [x] "GET /a"b HTTP/1.0" 200 1"#);
        assert_eq!(r.request_target, r#"/a"b"#);
    }

    #[test]
    fn item_ids() {
        assert_eq!(target_to_item("/a"), target_to_item("/a"));
        assert_ne!(target_to_item("/a"), target_to_item("/A"));
        assert_ne!(target_to_item("/a?x=1"), target_to_item("/a"));
        let ids: HashSet<ItemId> = (0..100_000).map(|i| target_to_item(&format!("/page/{i}.html"))).collect();
        assert_eq!(ids.len(), 100_000);
    }

    #[test]
    fn stats_and_round_trip() {
        let log = "\
a - - [t] \"GET /x HTTP/1.0\" 200 1
b - - [t] \"GET /y HTTP/1.0\" 200 1
corrupt line
c - - [t] \"GET /x HTTP/1.0\" 304 0

d - - [t] \"POST /x\" 200 1
";
        let t = ingest_str(log);
        let s = t.stats();
        assert_eq!(s, TraceStats { items: 4, distinct: 2, max_frequency: 3, malformed: 1 });
        let again = EmpiricalDistribution::from_stream(t.items.iter().copied());
        assert_eq!(TraceStats::of_histogram(&again, 1), s);
        let recs = log.lines().filter(|l| !l.is_empty()).map(parse_clf_line);
        assert_eq!(trace_stats(recs), s);
        assert_eq!(trace_stats(std::iter::empty()), TraceStats::default());
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::write::GzEncoder;
        let log = "a - - [t] \"GET /x HTTP/1.0\" 200 1\nb - - [t] \"GET /y HTTP/1.0\" 200 1\n";
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("log");
        let gz = dir.path().join("log.gz");
        std::fs::write(&plain, log).unwrap();
        let mut enc = GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::default());
        enc.write_all(log.as_bytes()).unwrap();
        enc.finish().unwrap();
        assert_eq!(ingest_file(&plain).unwrap().items, ingest_file(&gz).unwrap().items);
    }

    #[test]
    fn rank_frequency_dump() {
        let h = EmpiricalDistribution::from_stream([5, 5, 5, 9, 9, 1]);
        let mut out = Vec::new();
        write_rank_frequency_csv(&h, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "rank,frequency\n1,3\n2,2\n3,1\n");
    }

    #[test]
    fn known_trace_invariants() {
        for t in KNOWN_TRACES {
            assert!(t.distinct <= t.items && t.max_frequency <= t.items, "{}", t.name);
        }
    }
}
