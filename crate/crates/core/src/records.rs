//! Length-delimited record files shared by buffer snapshots and memory stores.
//!
//! Layout: one JSON header line `{"format":"waymark-records","schema":1,"kind":...}`
//! followed by records of the form `<byte-length>:<json>\n`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "waymark-records";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unsupported schema version {found} (this build reads {supported})")]
    VersionMismatch { found: u32, supported: u32 },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    schema: u32,
    kind: String,
}

pub fn encode<T: Serialize>(kind: &str, records: impl IntoIterator<Item = T>) -> String {
    let header = Header {
        format: FORMAT.to_string(),
        schema: SCHEMA_VERSION,
        kind: kind.to_string(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for rec in records {
        let body = serde_json::to_string(&rec).expect("record serializes");
        out.push_str(&body.len().to_string());
        out.push(':');
        out.push_str(&body);
        out.push('\n');
    }
    out
}

pub fn decode<T: DeserializeOwned>(kind: &str, text: &str) -> Result<Vec<T>, RecordError> {
    let (header_line, mut rest) = text
        .split_once('\n')
        .ok_or_else(|| RecordError::Schema("missing header line".into()))?;
    let header: Header = serde_json::from_str(header_line)
        .map_err(|e| RecordError::Schema(format!("bad header: {e}")))?;
    if header.format != FORMAT {
        return Err(RecordError::Schema(format!("unknown format {:?}", header.format)));
    }
    if header.schema != SCHEMA_VERSION {
        return Err(RecordError::VersionMismatch {
            found: header.schema,
            supported: SCHEMA_VERSION,
        });
    }
    if header.kind != kind {
        return Err(RecordError::Schema(format!(
            "expected a {kind} file, found {}",
            header.kind
        )));
    }

    let mut out = Vec::new();
    let mut n = 0usize;
    while !rest.is_empty() {
        n += 1;
        let (len, tail) = rest
            .split_once(':')
            .ok_or_else(|| RecordError::Schema(format!("record {n}: missing length prefix")))?;
        let len: usize = len
            .parse()
            .map_err(|_| RecordError::Schema(format!("record {n}: bad length {len:?}")))?;
        if tail.len() < len + 1 || !tail.is_char_boundary(len) || &tail[len..len + 1] != "\n" {
            return Err(RecordError::Schema(format!("record {n}: truncated or corrupt")));
        }
        let body = &tail[..len];
        out.push(
            serde_json::from_str(body)
                .map_err(|e| RecordError::Schema(format!("record {n}: {e}")))?,
        );
        rest = &tail[len + 1..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Rec {
        a: u32,
        s: String,
    }

    #[test]
    fn round_trip() {
        let recs = vec![
            Rec { a: 1, s: "x:y\nz".into() },
            Rec { a: 2, s: "ünïcode".into() },
        ];
        let text = encode("demo", &recs);
        let back: Vec<Rec> = decode("demo", &text).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn rejects_wrong_kind_version_and_corruption() {
        let text = encode("demo", [Rec { a: 1, s: "hello".into() }]);
        assert!(matches!(decode::<Rec>("other", &text), Err(RecordError::Schema(_))));

        let future = text.replace("\"schema\":1", "\"schema\":7");
        assert_eq!(
            decode::<Rec>("demo", &future),
            Err(RecordError::VersionMismatch { found: 7, supported: 1 })
        );

        let corrupt = text.replace("hello", "hello!!");
        assert!(matches!(decode::<Rec>("demo", &corrupt), Err(RecordError::Schema(_))));
        let truncated = &text[..text.len() - 4];
        assert!(matches!(decode::<Rec>("demo", truncated), Err(RecordError::Schema(_))));
        assert!(matches!(decode::<Rec>("demo", "garbage"), Err(RecordError::Schema(_))));
    }
}
