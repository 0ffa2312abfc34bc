//! Badge reader input: the tag directory, the line feed and debouncing.
//!
//! Directory files are CSV with rows `tag,user_id,display_name`. Rows of the
//! form `reader,<reader id>,<floor id>` map a reader to the floor of its
//! microphone. Blank lines and lines starting with `#` are ignored, as is a
//! leading `tag,user_id,display_name` header.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use floorctl_core::{FloorId, UserId};
use thiserror::Error;

pub const DEFAULT_DEBOUNCE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadgeHolder {
    pub user_id: UserId,
    pub display_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BadgeDirectory {
    tags: HashMap<String, BadgeHolder>,
    readers: HashMap<String, FloorId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct DirectoryError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: DirectoryError },
}

fn is_tag(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl BadgeDirectory {
    pub fn parse(text: &str) -> Result<BadgeDirectory, DirectoryError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut dir = BadgeDirectory::default();
        let mut tag_lines: HashMap<String, u64> = HashMap::new();
        let mut reader_lines: HashMap<String, u64> = HashMap::new();
        // The reader's own line count skips blank lines, so count from the byte
        // offset instead.
        // Record positions may start on a preceding blank line.
        let line_at = |p: &csv::Position| {
            let bytes = text.as_bytes();
            let mut at = (p.byte() as usize).min(bytes.len());
            while at < bytes.len() && matches!(bytes[at], b'\n' | b'\r') {
                at += 1;
            }
            bytes[..at].iter().filter(|b| **b == b'\n').count() as u64 + 1
        };
        let mut first = true;
        for row in reader.records() {
            let row =
                row.map_err(|e| DirectoryError { line: e.position().map_or(0, line_at), message: e.to_string() })?;
            let line = row.position().map_or(0, line_at);
            let err = |message: String| DirectoryError { line, message };
            let fields: Vec<&str> = row.iter().collect();
            if fields.iter().all(|f| f.is_empty()) {
                continue;
            }
            if std::mem::take(&mut first) && fields == ["tag", "user_id", "display_name"] {
                continue;
            }
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            if fields[0] == "reader" {
                let id = fields[1];
                if id.is_empty() || id.contains(char::is_whitespace) {
                    return Err(err(format!("bad reader id {id:?}")));
                }
                let floor: u16 = fields[2].parse().map_err(|_| err(format!("bad floor id {:?}", fields[2])))?;
                if let Some(prev) = reader_lines.insert(id.to_owned(), line) {
                    return Err(err(format!("reader {id} already defined on line {prev}")));
                }
                dir.readers.insert(id.to_owned(), FloorId(floor));
                continue;
            }
            let tag = fields[0];
            if !is_tag(tag) {
                return Err(err(format!("tag {tag:?} is not lowercase hex")));
            }
            let user: u16 = fields[1].parse().map_err(|_| err(format!("bad user id {:?}", fields[1])))?;
            if fields[2].is_empty() {
                return Err(err("empty display name".into()));
            }
            if let Some(prev) = tag_lines.insert(tag.to_owned(), line) {
                return Err(err(format!("tag {tag} already defined on line {prev}")));
            }
            dir.tags.insert(tag.to_owned(), BadgeHolder { user_id: UserId(user), display_name: fields[2].to_owned() });
        }
        Ok(dir)
    }

    pub fn load(path: &Path) -> Result<BadgeDirectory, LoadError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: shown.clone(), source })?;
        BadgeDirectory::parse(&text).map_err(|source| LoadError::Parse { path: shown, source })
    }

    pub fn holder(&self, tag: &str) -> Option<&BadgeHolder> {
        self.tags.get(tag)
    }

    pub fn reader_floor(&self, reader: &str) -> Option<FloorId> {
        self.readers.get(reader).copied()
    }

    pub fn add_reader(&mut self, reader: impl Into<String>, floor: FloorId) {
        self.readers.insert(reader.into(), floor);
    }

    pub fn readers(&self) -> impl Iterator<Item = (&str, FloorId)> {
        self.readers.iter().map(|(r, f)| (r.as_str(), *f))
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }
}

/// The directory in force. Loads replace it whole; a read in progress keeps
/// the version it started with.
#[derive(Debug, Clone, Default)]
pub struct SharedDirectory(Arc<RwLock<Arc<BadgeDirectory>>>);

impl SharedDirectory {
    pub fn new(dir: BadgeDirectory) -> SharedDirectory {
        SharedDirectory(Arc::new(RwLock::new(Arc::new(dir))))
    }

    pub fn current(&self) -> Arc<BadgeDirectory> {
        self.0.read().unwrap().clone()
    }

    pub fn replace(&self, dir: BadgeDirectory) {
        *self.0.write().unwrap() = Arc::new(dir);
    }
}

/// One line of the badge feed: `TAG <lowercase hex> READER <token>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadgeRead {
    pub tag: String,
    pub reader: String,
}

impl BadgeRead {
    pub fn parse(line: &str) -> Result<BadgeRead, String> {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let mut words = line.split(' ');
        match (words.next(), words.next(), words.next(), words.next(), words.next()) {
            (Some("TAG"), Some(tag), Some("READER"), Some(reader), None) if is_tag(tag) && !reader.is_empty() => {
                Ok(BadgeRead { tag: tag.to_owned(), reader: reader.to_owned() })
            }
            _ => Err(format!("expected \"TAG <lowercase-hex> READER <id>\", got {line:?}")),
        }
    }
}

impl fmt::Display for BadgeRead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TAG {} READER {}", self.tag, self.reader)
    }
}

/// Suppresses repeat reads of a tag at a reader. The window slides: every
/// read, suppressed or not, restarts it, so a badge held against a reader
/// produces one action however long it stays there.
#[derive(Debug, Clone)]
pub struct Debouncer {
    window: Duration,
    last: HashMap<(String, String), Instant>,
}

impl Debouncer {
    pub fn new(window: Duration) -> Debouncer {
        Debouncer { window, last: HashMap::new() }
    }

    /// True if the read should be acted upon.
    pub fn admit(&mut self, read: &BadgeRead, now: Instant) -> bool {
        if self.last.len() > 4096 {
            let window = self.window;
            self.last.retain(|_, at| now.saturating_duration_since(*at) < window);
        }
        let key = (read.tag.clone(), read.reader.clone());
        match self.last.insert(key, now) {
            Some(prev) => now.saturating_duration_since(prev) >= self.window,
            None => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tags_and_readers() {
        let dir = BadgeDirectory::parse(
            "tag,user_id,display_name\n4d004b05d6,101,User1\n# comment\n\n4d004a5c07, 102, User2\nreader,mic-1,1\n",
        )
        .unwrap();
        assert_eq!(dir.holder("4d004b05d6"), Some(&BadgeHolder { user_id: UserId(101), display_name: "User1".into() }));
        assert_eq!(dir.holder("4d004a5c07").unwrap().display_name, "User2");
        assert_eq!(dir.reader_floor("mic-1"), Some(FloorId(1)));
        assert_eq!(dir.tag_count(), 2);
    }

    #[test]
    fn quoted_names_may_contain_commas() {
        let dir = BadgeDirectory::parse("ab,7,\"Romano, Simon\"\n").unwrap();
        assert_eq!(dir.holder("ab").unwrap().display_name, "Romano, Simon");
    }

    #[test]
    fn duplicate_tags_name_both_lines() {
        let err = BadgeDirectory::parse("aa,1,A\nbb,2,B\naa,3,C\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("line 1"), "{err}");
    }

    #[test]
    fn malformed_lines_report_their_line() {
        let err = BadgeDirectory::parse("aa,1,A\n\nzz,2,B\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert_eq!(BadgeDirectory::parse("aa,x,A").unwrap_err().line, 1);
        assert_eq!(BadgeDirectory::parse("aa,1").unwrap_err().line, 1);
        assert_eq!(BadgeDirectory::parse("aa,1,A\nreader,mic,floor").unwrap_err().line, 2);
    }

    #[test]
    fn empty_file_is_an_empty_directory() {
        assert_eq!(BadgeDirectory::parse("").unwrap(), BadgeDirectory::default());
    }

    #[test]
    fn feed_lines() {
        assert_eq!(
            BadgeRead::parse("TAG 4d004b05d6 READER mic-1"),
            Ok(BadgeRead { tag: "4d004b05d6".into(), reader: "mic-1".into() })
        );
        assert!(BadgeRead::parse("TAG 4d004b05d6 READER mic-1\r").is_ok());
        for bad in
            ["TAG 4D00 READER mic-1", "TAG  READER x", "tag ab reader x", "TAG ab READER", "TAG ab READER x y", ""]
        {
            assert!(BadgeRead::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn debounce_window_slides() {
        let read = BadgeRead { tag: "ab".into(), reader: "mic-1".into() };
        let other = BadgeRead { tag: "ab".into(), reader: "mic-2".into() };
        let mut d = Debouncer::new(Duration::from_secs(2));
        let t0 = Instant::now();
        assert!(d.admit(&read, t0));
        assert!(d.admit(&other, t0));
        assert!(!d.admit(&read, t0 + Duration::from_millis(1500)));
        // Still held: the suppressed read restarted the window.
        assert!(!d.admit(&read, t0 + Duration::from_millis(3000)));
        assert!(d.admit(&read, t0 + Duration::from_millis(5000)));
    }
}
