//! Grapheme inventory and text normalization.

use crate::error::{Error, Result};

/// Output graphemes: `a`–`z`, space, apostrophe. Blank is not a grapheme.
pub const GRAPHEMES: [char; 28] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's', 't', 'u', 'v',
    'w', 'x', 'y', 'z', ' ', '\'',
];

pub const SPACE: usize = 26;
pub const APOSTROPHE: usize = 27;

pub fn grapheme_id(c: char) -> Result<usize> {
    match c {
        'a'..='z' => Ok(c as usize - 'a' as usize),
        ' ' => Ok(SPACE),
        '\'' => Ok(APOSTROPHE),
        _ => Err(Error::OutOfVocabulary(c)),
    }
}

/// Grapheme ids of `text`, which must already be normalized.
pub fn to_labels(text: &str) -> Result<Vec<usize>> {
    text.chars().map(grapheme_id).collect()
}

/// Renders grapheme ids; ids past the inventory are skipped.
pub fn from_labels(labels: &[usize]) -> String {
    labels.iter().filter_map(|&l| GRAPHEMES.get(l)).collect()
}

/// Lowercase, drop punctuation except apostrophes, collapse whitespace.
pub fn normalize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalized words of `text`.
pub fn words(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|w| !w.is_empty()).map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_graphemes() {
        let labels = to_labels("zhuge dan's").unwrap();
        assert_eq!(from_labels(&labels), "zhuge dan's");
        assert_eq!(labels[5], SPACE);
    }

    #[test]
    fn rejects_out_of_vocabulary() {
        assert!(matches!(to_labels("a1"), Err(Error::OutOfVocabulary('1'))));
    }

    #[test]
    fn normalization_keeps_apostrophes() {
        assert_eq!(normalize("  Zhuge, DAN's   home!"), "zhuge dan's home");
        assert_eq!(words(""), Vec::<String>::new());
    }
}
