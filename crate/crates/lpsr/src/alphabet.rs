//! The OCR alphabet (digits 0-9 then letters A-Z), plate layouts, and labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of character positions on a plate.
pub const PLATE_LEN: usize = 7;
/// Number of character classes in the alphabet.
pub const NUM_CLASSES: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharClass {
    Digit,
    Letter,
}

/// Ordered character classes: indices 0..=9 are '0'..='9', 10..=35 are 'A'..='Z'.
#[derive(Debug, Clone, Copy, Default)]
pub struct Alphabet;

impl Alphabet {
    pub fn len(&self) -> usize {
        NUM_CLASSES
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol(&self, index: usize) -> char {
        assert!(index < NUM_CLASSES, "class index {index} out of range");
        if index < 10 {
            (b'0' + index as u8) as char
        } else {
            (b'A' + (index - 10) as u8) as char
        }
    }

    pub fn class_of(&self, c: char) -> Result<usize> {
        match c {
            '0'..='9' => Ok(c as usize - '0' as usize),
            'A'..='Z' => Ok(10 + c as usize - 'A' as usize),
            _ => Err(Error::InvalidLabel {
                label: c.to_string(),
                reason: format!("character {c:?} is not in the OCR alphabet"),
            }),
        }
    }

    pub fn is_digit(&self, index: usize) -> bool {
        index < 10
    }

    pub fn is_letter(&self, index: usize) -> bool {
        (10..NUM_CLASSES).contains(&index)
    }

    pub fn char_class(&self, index: usize) -> CharClass {
        if self.is_digit(index) {
            CharClass::Digit
        } else {
            CharClass::Letter
        }
    }
}

/// Plate layout family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutId {
    Brazilian,
    Mercosur,
}

impl LayoutId {
    pub fn spec(self) -> LayoutSpec {
        LayoutSpec::new(self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayoutId::Brazilian => "brazilian",
            LayoutId::Mercosur => "mercosur",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "brazilian" => Ok(LayoutId::Brazilian),
            "mercosur" => Ok(LayoutId::Mercosur),
            _ => Err(Error::Config(format!("unknown layout {s:?}"))),
        }
    }
}

/// Fixed digit/letter pattern of a layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutSpec {
    pub id: LayoutId,
    pub pattern: [CharClass; PLATE_LEN],
}

impl LayoutSpec {
    pub fn new(id: LayoutId) -> Self {
        use CharClass::{Digit as D, Letter as L};
        let pattern = match id {
            LayoutId::Brazilian => [L, L, L, D, D, D, D],
            LayoutId::Mercosur => [L, L, L, D, L, D, D],
        };
        LayoutSpec { id, pattern }
    }
}

/// A 7-character plate label tied to its layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpLabel {
    pub text: String,
    pub layout: LayoutId,
}

impl LpLabel {
    pub fn new(text: impl Into<String>, layout: LayoutId) -> Result<Self> {
        let label = LpLabel {
            text: text.into(),
            layout,
        };
        label.validate()?;
        Ok(label)
    }

    pub fn validate(&self) -> Result<()> {
        let alphabet = Alphabet;
        if self.text.chars().count() != PLATE_LEN {
            return Err(Error::InvalidLabel {
                label: self.text.clone(),
                reason: format!("expected {PLATE_LEN} characters"),
            });
        }
        let spec = self.layout.spec();
        for (pos, c) in self.text.chars().enumerate() {
            let class = alphabet.class_of(c).map_err(|_| Error::InvalidLabel {
                label: self.text.clone(),
                reason: format!("character {c:?} at position {pos} is not in the alphabet"),
            })?;
            if alphabet.char_class(class) != spec.pattern[pos] {
                return Err(Error::InvalidLabel {
                    label: self.text.clone(),
                    reason: format!(
                        "{:?} layout requires a {:?} at position {pos}, got {c:?}",
                        self.layout, spec.pattern[pos]
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.text.chars()
    }
}

/// Encode a label to its length-7 class-index sequence.
pub fn encode_label(label: &LpLabel, alphabet: &Alphabet) -> Result<[usize; PLATE_LEN]> {
    label.validate()?;
    let mut out = [0usize; PLATE_LEN];
    for (slot, c) in out.iter_mut().zip(label.text.chars()) {
        *slot = alphabet.class_of(c)?;
    }
    Ok(out)
}

/// Decode a class-index sequence back to its 7-character string.
pub fn decode_indices(indices: &[usize; PLATE_LEN], alphabet: &Alphabet) -> String {
    indices.iter().map(|&i| alphabet.symbol(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_is_a_bijection() {
        let a = Alphabet;
        for i in 0..NUM_CLASSES {
            assert_eq!(a.class_of(a.symbol(i)).unwrap(), i);
        }
    }

    #[test]
    fn digit_letter_partition() {
        let a = Alphabet;
        for i in 0..NUM_CLASSES {
            assert_ne!(a.is_digit(i), a.is_letter(i));
        }
    }

    #[test]
    fn encode_known_label() {
        let a = Alphabet;
        let label = LpLabel::new("ABC1234", LayoutId::Brazilian).unwrap();
        assert_eq!(encode_label(&label, &a).unwrap(), [10, 11, 12, 1, 2, 3, 4]);
    }

    #[test]
    fn encode_rejects_unknown_glyph() {
        let label = LpLabel {
            text: "AB?1234".into(),
            layout: LayoutId::Brazilian,
        };
        assert!(matches!(
            encode_label(&label, &Alphabet),
            Err(Error::InvalidLabel { .. })
        ));
    }

    #[test]
    fn layout_mismatch_rejected() {
        assert!(LpLabel::new("1BC1234", LayoutId::Brazilian).is_err());
        assert!(LpLabel::new("ABC1234", LayoutId::Mercosur).is_err());
        assert!(LpLabel::new("ABC1D23", LayoutId::Mercosur).is_ok());
    }

    #[test]
    fn layout_patterns() {
        use CharClass::{Digit as D, Letter as L};
        assert_eq!(
            LayoutId::Brazilian.spec().pattern,
            [L, L, L, D, D, D, D]
        );
        assert_eq!(LayoutId::Mercosur.spec().pattern, [L, L, L, D, L, D, D]);
    }
}
