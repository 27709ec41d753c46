use std::path::Path;

use log::warn;

use super::{DataError, GestureTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub gesture: GestureTag,
}

/// Parse `<start> <end> G<k>` lines. Segments must be ordered and disjoint.
pub fn parse_transcript_str(text: &str, name: &str) -> Result<Vec<TranscriptSegment>, DataError> {
    let mut out: Vec<TranscriptSegment> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let err = |msg: String| DataError::Parse {
            file: name.to_string(),
            line: lineno,
            msg,
        };
        if toks.len() != 3 {
            return Err(err(format!("expected `<start> <end> G<k>`, got {line:?}")));
        }
        let start: usize = toks[0]
            .parse()
            .map_err(|_| err(format!("bad start frame {:?}", toks[0])))?;
        let end: usize = toks[1]
            .parse()
            .map_err(|_| err(format!("bad end frame {:?}", toks[1])))?;
        let gesture: GestureTag = toks[2].parse().map_err(err)?;
        if start == 0 {
            return Err(err("frames are 1-based".into()));
        }
        if start > end {
            return Err(err(format!("start {start} after end {end}")));
        }
        if let GestureTag::Unsupported(n) = gesture {
            warn!("{name}:{lineno}: gesture G{n} is labeled but unsupported; kept and excluded from modeling");
        }
        if let Some(prev) = out.last() {
            if start <= prev.end_frame {
                return Err(DataError::Overlap {
                    file: name.to_string(),
                    first: out.len(),
                    second: out.len() + 1,
                });
            }
        }
        out.push(TranscriptSegment {
            start_frame: start,
            end_frame: end,
            gesture,
        });
    }
    Ok(out)
}

pub fn parse_transcript(path: &Path) -> Result<Vec<TranscriptSegment>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_transcript_str(&text, &path.display().to_string())
}

pub fn format_transcript(segments: &[TranscriptSegment]) -> String {
    segments
        .iter()
        .map(|s| format!("{} {} {}\n", s.start_frame, s.end_frame, s.gesture))
        .collect()
}
