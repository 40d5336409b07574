//! Tab-separated interaction logs.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Catalog, CorpusError};

pub const HEADER: &str = "user_id\titem_id\ttimestamp";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: u64,
}

impl Event {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, timestamp: u64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            timestamp,
        }
    }
}

/// Events in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub events: Vec<Event>,
}

impl InteractionLog {
    pub fn new(events: Vec<Event>) -> Self {
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Fails on the first event whose item is not in `catalog`.
    pub fn check_join(&self, catalog: &Catalog) -> Result<(), CorpusError> {
        match self.events.iter().find(|e| catalog.ordinal(&e.item_id).is_none()) {
            Some(e) => Err(CorpusError::Validation {
                item: e.item_id.clone(),
                message: format!("interaction of user `{}` references unknown item", e.user_id),
            }),
            None => Ok(()),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.split('\n');
        match lines.next() {
            Some(h) if h == HEADER => {}
            _ => {
                return Err(CorpusError::Parse {
                    line: 1,
                    message: format!("expected header `{}`", HEADER.escape_debug()),
                })
            }
        }
        let mut events = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(CorpusError::Parse {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(CorpusError::Parse {
                    line: line_no,
                    message: "empty user or item id".into(),
                });
            }
            let ts = fields[2].parse::<u64>().map_err(|_| CorpusError::Parse {
                line: line_no,
                message: format!("timestamp `{}` is not an unsigned integer", fields[2]),
            })?;
            events.push(Event::new(fields[0], fields[1], ts));
        }
        Ok(Self { events })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text =
            fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        let log = Self::parse(&text)?;
        log::info!("loaded {} interactions from {}", log.len(), path.display());
        Ok(log)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for e in &self.events {
            writeln!(w, "{}\t{}\t{}", e.user_id, e.item_id, e.timestamp)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ids are UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_text()).map_err(|e| CorpusError::Io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_lines() {
        let log = InteractionLog::parse("user_id\titem_id\ttimestamp\nu1\ta\t3\nu1\tb\t1\nu2\ta\t2\n")
            .unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.events[1], Event::new("u1", "b", 1));
    }

    #[test]
    fn header_only() {
        assert!(InteractionLog::parse("user_id\titem_id\ttimestamp\n").unwrap().is_empty());
        assert!(InteractionLog::parse("user_id\titem_id\ttimestamp").unwrap().is_empty());
    }

    #[test]
    fn two_fields_names_line() {
        let err = InteractionLog::parse("user_id\titem_id\ttimestamp\nu1\ta\t3\nu2\tb\n").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn non_integer_timestamp() {
        for bad in ["-1", "1.5", "abc", "18446744073709551616"] {
            let text = format!("user_id\titem_id\ttimestamp\nu\ti\t{bad}\n");
            assert!(matches!(
                InteractionLog::parse(&text),
                Err(CorpusError::Parse { line: 2, .. })
            ));
        }
    }

    #[test]
    fn wrong_header() {
        assert!(matches!(
            InteractionLog::parse("user\titem\tts\n"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let log = InteractionLog::new(vec![
            Event::new("u1", "a", u64::MAX),
            Event::new("u 2", "ä", 0),
        ]);
        let text = log.to_text();
        assert_eq!(InteractionLog::parse(&text).unwrap(), log);
    }
}
