//! Item catalogs and the `MMF1` binary feature format.
//!
//! ```text
//! "MMF1" | u32 record_count | u32 d_raw
//! per record:
//!   u32 id_len | id (UTF-8) | u8 flags (bit0 visual, bit1 text)
//!   [visual] u32 frame_count | frame_count × d_raw × f32
//!   [text]   d_raw × f32
//! ```
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::CorpusError;

pub const MAGIC: &[u8; 4] = b"MMF1";
const FLAG_VISUAL: u8 = 0b01;
const FLAG_TEXT: u8 = 0b10;

/// One item and its raw modality features.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub item_id: String,
    /// Per-frame visual feature vectors.
    pub visual: Option<Vec<Vec<f32>>>,
    pub text: Option<Vec<f32>>,
}

impl ItemRecord {
    pub fn has_visual(&self) -> bool {
        self.visual.is_some()
    }

    pub fn has_text(&self) -> bool {
        self.text.is_some()
    }

    pub fn is_bimodal(&self) -> bool {
        self.has_visual() && self.has_text()
    }

    fn validate(&self, d_raw: usize) -> Result<(), CorpusError> {
        let bad = |msg: String| CorpusError::Validation {
            item: self.item_id.clone(),
            message: msg,
        };
        if self.item_id.is_empty() {
            return Err(bad("empty item id".into()));
        }
        if self.visual.is_none() && self.text.is_none() {
            return Err(bad("no modality present".into()));
        }
        if let Some(frames) = &self.visual {
            if frames.is_empty() {
                return Err(bad("visual modality with zero frames".into()));
            }
            if let Some(f) = frames.iter().find(|f| f.len() != d_raw) {
                return Err(bad(format!(
                    "visual frame has length {}, expected {d_raw}",
                    f.len()
                )));
            }
        }
        if let Some(t) = &self.text {
            if t.len() != d_raw {
                return Err(bad(format!(
                    "text vector has length {}, expected {d_raw}",
                    t.len()
                )));
            }
        }
        Ok(())
    }
}

/// Validated, ordered item collection. Ordinals follow insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    d_raw: usize,
    items: Vec<ItemRecord>,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(d_raw: usize, items: Vec<ItemRecord>) -> Result<Self, CorpusError> {
        if d_raw == 0 {
            return Err(CorpusError::Config("d_raw must be positive".into()));
        }
        let mut index = HashMap::with_capacity(items.len());
        for (ordinal, item) in items.iter().enumerate() {
            item.validate(d_raw)?;
            if index.insert(item.item_id.clone(), ordinal).is_some() {
                return Err(CorpusError::Validation {
                    item: item.item_id.clone(),
                    message: "duplicate item id".into(),
                });
            }
        }
        Ok(Self { d_raw, items, index })
    }

    pub fn d_raw(&self) -> usize {
        self.d_raw
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn get(&self, ordinal: usize) -> &ItemRecord {
        &self.items[ordinal]
    }

    pub fn ordinal(&self, item_id: &str) -> Option<usize> {
        self.index.get(item_id).copied()
    }

    /// A new catalog holding the given ordinals, in the given order.
    pub fn subset(&self, ordinals: &[usize]) -> Result<Self, CorpusError> {
        Self::new(
            self.d_raw,
            ordinals.iter().map(|&o| self.items[o].clone()).collect(),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.items.len() as u32).to_le_bytes())?;
        w.write_all(&(self.d_raw as u32).to_le_bytes())?;
        for item in &self.items {
            w.write_all(&(item.item_id.len() as u32).to_le_bytes())?;
            w.write_all(item.item_id.as_bytes())?;
            let mut flags = 0u8;
            if item.visual.is_some() {
                flags |= FLAG_VISUAL;
            }
            if item.text.is_some() {
                flags |= FLAG_TEXT;
            }
            w.write_all(&[flags])?;
            if let Some(frames) = &item.visual {
                w.write_all(&(frames.len() as u32).to_le_bytes())?;
                for f in frames {
                    write_f32s(&mut w, f)?;
                }
            }
            if let Some(t) = &item.text {
                write_f32s(&mut w, t)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CorpusError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| CorpusError::Format("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(CorpusError::Format("bad magic, expected MMF1".into()));
        }
        let count = read_u32(&mut r)? as usize;
        let d_raw = read_u32(&mut r)? as usize;
        if d_raw == 0 {
            return Err(CorpusError::Format("d_raw is zero".into()));
        }
        let mut items = Vec::with_capacity(count.min(1 << 20));
        for rec in 0..count {
            let id_len = read_u32(&mut r)? as usize;
            let id = String::from_utf8(read_exact_vec(&mut r, id_len)?)
                .map_err(|_| CorpusError::Format(format!("record {rec}: id is not UTF-8")))?;
            let flags = read_exact_vec(&mut r, 1)?[0];
            if flags & !(FLAG_VISUAL | FLAG_TEXT) != 0 {
                return Err(CorpusError::Format(format!(
                    "record {rec} ({id}): unknown flag bits {flags:#04x}"
                )));
            }
            let visual = if flags & FLAG_VISUAL != 0 {
                let frames = read_u32(&mut r)? as usize;
                let mut v = Vec::with_capacity(frames.min(1 << 12));
                for _ in 0..frames {
                    v.push(read_f32s(&mut r, d_raw)?);
                }
                Some(v)
            } else {
                None
            };
            let text = if flags & FLAG_TEXT != 0 {
                Some(read_f32s(&mut r, d_raw)?)
            } else {
                None
            };
            items.push(ItemRecord {
                item_id: id,
                visual,
                text,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| CorpusError::Io(String::new(), e))? != 0 {
            return Err(CorpusError::Format("trailing bytes after last record".into()));
        }
        Self::new(d_raw, items)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let bytes = fs::read(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        Self::read_from(bytes.as_slice())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_bytes()).map_err(|e| CorpusError::Io(path.display().to_string(), e))
    }
}

fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, CorpusError> {
    let mut buf = Vec::new();
    r.take(n as u64)
        .read_to_end(&mut buf)
        .map_err(|e| CorpusError::Io(String::new(), e))?;
    if buf.len() != n {
        return Err(CorpusError::Format("unexpected end of file".into()));
    }
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CorpusError> {
    let b = read_exact_vec(r, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, CorpusError> {
    Ok(read_exact_vec(r, n * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, visual: Option<Vec<Vec<f32>>>, text: Option<Vec<f32>>) -> ItemRecord {
        ItemRecord {
            item_id: id.into(),
            visual,
            text,
        }
    }

    #[test]
    fn two_records_keep_file_order() {
        let cat = Catalog::new(
            4,
            vec![
                rec("b", Some(vec![vec![1.0; 4]]), None),
                rec("a", None, Some(vec![0.5; 4])),
            ],
        )
        .unwrap();
        let back = Catalog::read_from(cat.to_bytes().as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.ordinal("b"), Some(0));
        assert_eq!(back.ordinal("a"), Some(1));
    }

    #[test]
    fn zero_modalities_rejected() {
        let err = Catalog::new(4, vec![rec("x", None, None)]).unwrap_err();
        assert!(matches!(err, CorpusError::Validation { item, .. } if item == "x"));
    }

    #[test]
    fn dimension_mismatch_names_record() {
        let err = Catalog::new(4, vec![rec("bad", None, Some(vec![0.0; 3]))]).unwrap_err();
        assert!(matches!(err, CorpusError::Validation { item, .. } if item == "bad"));
        let err = Catalog::new(2, vec![rec("frames", Some(vec![]), None)]).unwrap_err();
        assert!(matches!(err, CorpusError::Validation { item, .. } if item == "frames"));
    }

    #[test]
    fn duplicate_id_rejected() {
        let t = Some(vec![0.0; 2]);
        let err = Catalog::new(2, vec![rec("a", None, t.clone()), rec("a", None, t)]).unwrap_err();
        assert!(matches!(err, CorpusError::Validation { .. }));
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(
            Catalog::read_from(&b"MMF2\0\0\0\0\x04\0\0\0"[..]),
            Err(CorpusError::Format(_))
        ));
        assert!(matches!(Catalog::read_from(&b"MM"[..]), Err(CorpusError::Format(_))));
    }

    #[test]
    fn bitwise_round_trip_with_special_values() {
        let cat = Catalog::new(
            3,
            vec![
                rec(
                    "ü-item",
                    Some(vec![vec![-0.0, f32::MIN_POSITIVE, 1e-40], vec![3.5, -2.25, 7.0]]),
                    Some(vec![f32::MAX, -1.0, 0.1]),
                ),
                rec("t", None, Some(vec![0.3, 0.2, 0.1])),
            ],
        )
        .unwrap();
        let bytes = cat.to_bytes();
        let back = Catalog::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let bits = |c: &Catalog| -> Vec<u32> {
            c.items()
                .iter()
                .flat_map(|i| {
                    i.visual
                        .iter()
                        .flatten()
                        .flatten()
                        .chain(i.text.iter().flatten())
                        .map(|f| f.to_bits())
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        assert_eq!(bits(&back), bits(&cat));
    }
}
