//! Raw modality features and per-item token states.

use crate::corpus::{Catalog, ItemRecord};

use super::EncoderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Visual = 0,
    Text = 1,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Visual, Modality::Text];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Frame indices kept when `m` frames exceed the cap: `⌊j·m/cap⌋`.
pub fn subsample_indices(m: usize, cap: usize) -> Vec<usize> {
    if m <= cap {
        (0..m).collect()
    } else {
        (0..cap).map(|j| j * m / cap).collect()
    }
}

/// Mean of the retained frames, in `f64`.
pub fn pool_frames(frames: &[Vec<f32>], max_frames: usize) -> Result<Vec<f64>, EncoderError> {
    let first = frames
        .first()
        .ok_or_else(|| EncoderError::Input("visual modality has no frames".into()))?;
    let keep = subsample_indices(frames.len(), max_frames);
    let mut mean = vec![0.0; first.len()];
    for &j in &keep {
        if frames[j].len() != mean.len() {
            return Err(EncoderError::Input("frames of unequal length".into()));
        }
        for (m, &x) in mean.iter_mut().zip(&frames[j]) {
            *m += x as f64;
        }
    }
    let n = keep.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// An item's pooled raw features, ready for the input projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeatures {
    pub visual: Option<Vec<f64>>,
    pub text: Option<Vec<f64>>,
}

impl ItemFeatures {
    pub fn from_record(item: &ItemRecord, max_frames: usize) -> Result<Self, EncoderError> {
        Ok(Self {
            visual: item
                .visual
                .as_ref()
                .map(|f| pool_frames(f, max_frames))
                .transpose()?,
            text: item
                .text
                .as_ref()
                .map(|t| t.iter().map(|&x| x as f64).collect()),
        })
    }

    pub fn get(&self, m: Modality) -> Option<&[f64]> {
        match m {
            Modality::Visual => self.visual.as_deref(),
            Modality::Text => self.text.as_deref(),
        }
    }

    /// All modalities present, as real tokens.
    pub fn tokens(&self) -> ItemTokens<'_> {
        ItemTokens {
            visual: TokenState::from_option(self.visual.as_deref()),
            text: TokenState::from_option(self.text.as_deref()),
        }
    }
}

/// Features for every catalog item, by ordinal.
pub fn prepare_catalog(catalog: &Catalog, max_frames: usize) -> Result<Vec<ItemFeatures>, EncoderError> {
    catalog
        .items()
        .iter()
        .map(|it| ItemFeatures::from_record(it, max_frames))
        .collect()
}

/// What feeds one modality slot of an item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TokenState<'a> {
    Real(&'a [f64]),
    /// Deliberately hidden; fed the mask embedding.
    Masked,
    /// Not available for this item; fed the mask embedding.
    Absent,
}

impl<'a> TokenState<'a> {
    pub fn from_option(v: Option<&'a [f64]>) -> Self {
        v.map_or(TokenState::Absent, TokenState::Real)
    }

    pub fn features(&self) -> Option<&'a [f64]> {
        match *self {
            TokenState::Real(f) => Some(f),
            _ => None,
        }
    }
}

/// The two modality slots of one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemTokens<'a> {
    pub visual: TokenState<'a>,
    pub text: TokenState<'a>,
}

impl<'a> ItemTokens<'a> {
    /// Both slots masked.
    pub const MASKED: ItemTokens<'static> = ItemTokens {
        visual: TokenState::Masked,
        text: TokenState::Masked,
    };

    pub fn get(&self, m: Modality) -> TokenState<'a> {
        match m {
            Modality::Visual => self.visual,
            Modality::Text => self.text,
        }
    }

    pub fn mask(mut self, m: Modality) -> Self {
        match m {
            Modality::Visual => self.visual = TokenState::Masked,
            Modality::Text => self.text = TokenState::Masked,
        }
        self
    }
}
