//! Masked-item corruption of training sequences.

use rand::Rng as _;

use super::FinetuneError;
use crate::numerics::Rng;

/// What feeds one sequence position after corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotInput {
    /// Features of the catalog item with this ordinal (the original or a replacement).
    Item(usize),
    /// Both modality tokens replaced by the mask embedding.
    Masked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub inputs: Vec<SlotInput>,
    /// `(position, original item ordinal)`, ascending by position.
    pub slots: Vec<(usize, usize)>,
}

/// Corrupts `seq` (catalog ordinals) for masked item prediction.
///
/// The final position is always masked and always a prediction slot. Each
/// earlier position is selected with probability `p`; a selected position is
/// masked with probability 0.8, replaced by a uniformly drawn different item
/// with probability 0.1, and left as is otherwise. Every selected position
/// becomes a prediction slot.
///
/// Draw order per earlier position: one `f64` for selection; if selected, one
/// `f64` for the outcome; on replacement, one integer in `0..n_items-1`
/// shifted past the original. With a single-item catalog a replacement
/// degenerates to "unchanged".
pub fn apply_masking(
    seq: &[usize],
    p: f64,
    n_items: usize,
    rng: &mut Rng,
) -> Result<MaskedSequence, FinetuneError> {
    if seq.is_empty() {
        return Err(FinetuneError::Input("cannot mask an empty sequence".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(FinetuneError::Config(format!("mask ratio {p} outside [0, 1]")));
    }
    let last = seq.len() - 1;
    let mut inputs = Vec::with_capacity(seq.len());
    let mut slots = Vec::new();
    for (pos, &item) in seq[..last].iter().enumerate() {
        if rng.random::<f64>() >= p {
            inputs.push(SlotInput::Item(item));
            continue;
        }
        slots.push((pos, item));
        let r = rng.random::<f64>();
        inputs.push(if r < 0.8 {
            SlotInput::Masked
        } else if r < 0.9 && n_items > 1 {
            let j = rng.random_range(0..n_items - 1);
            SlotInput::Item(if j >= item { j + 1 } else { j })
        } else {
            SlotInput::Item(item)
        });
    }
    inputs.push(SlotInput::Masked);
    slots.push((last, seq[last]));
    Ok(MaskedSequence { inputs, slots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::stream;

    #[test]
    fn zero_ratio_masks_only_last() {
        let mut rng = stream(1, &[1]);
        let m = apply_masking(&[3, 1, 4, 1], 0.0, 10, &mut rng).unwrap();
        assert_eq!(m.slots, vec![(3, 1)]);
        assert_eq!(
            m.inputs,
            vec![SlotInput::Item(3), SlotInput::Item(1), SlotInput::Item(4), SlotInput::Masked]
        );
    }

    #[test]
    fn single_position() {
        let mut rng = stream(1, &[1]);
        let m = apply_masking(&[7], 0.5, 10, &mut rng).unwrap();
        assert_eq!(m.inputs, vec![SlotInput::Masked]);
        assert_eq!(m.slots, vec![(0, 7)]);
        assert!(apply_masking(&[], 0.5, 10, &mut rng).is_err());
    }

    #[test]
    fn full_ratio_selects_everything_and_labels_originals() {
        let seq: Vec<usize> = (0..50).map(|i| i % 7).collect();
        let mut rng = stream(3, &[1]);
        let m = apply_masking(&seq, 1.0, 7, &mut rng).unwrap();
        assert_eq!(m.slots.len(), seq.len());
        for (pos, item) in &m.slots {
            assert_eq!(seq[*pos], *item);
        }
        for (pos, input) in m.inputs.iter().enumerate() {
            if let SlotInput::Item(j) = input {
                assert!(*j < 7);
                let _ = pos;
            }
        }
    }

    #[test]
    fn replacement_never_returns_original() {
        let seq = vec![2; 2000];
        let mut rng = stream(5, &[1]);
        let m = apply_masking(&seq, 1.0, 3, &mut rng).unwrap();
        let replaced = m.inputs.iter().filter(|s| matches!(s, SlotInput::Item(j) if *j != 2)).count();
        let kept = m.inputs.iter().filter(|s| matches!(s, SlotInput::Item(2))).count();
        assert!(replaced > 120 && replaced < 280, "{replaced}");
        assert!(kept > 120 && kept < 280, "{kept}");
    }
}
