use std::collections::HashMap;
use std::sync::OnceLock;

const BUNDLED: &str = include_str!("lexicon.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WordClass {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Preposition,
    Numeral,
    Other,
}

impl WordClass {
    /// Classes that the incorrect-caption corruption rewrites.
    pub fn is_replaceable(self) -> bool {
        self != WordClass::Other
    }

    fn from_section(name: &str) -> Option<Self> {
        Some(match name {
            "noun" => Self::Noun,
            "verb" => Self::Verb,
            "adjective" => Self::Adjective,
            "adverb" => Self::Adverb,
            "preposition" => Self::Preposition,
            "numeral" => Self::Numeral,
            "other" => Self::Other,
            _ => return None,
        })
    }
}

/// Word-class lookup with suffix fallbacks for unknown words.
#[derive(Clone, Debug, Default)]
pub struct PosLexicon {
    words: HashMap<String, WordClass>,
    by_class: HashMap<WordClass, Vec<String>>,
}

impl PosLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// The bundled lexicon. A word listed under several classes keeps the
    /// first one.
    pub fn bundled() -> &'static PosLexicon {
        static LEX: OnceLock<PosLexicon> = OnceLock::new();
        LEX.get_or_init(|| {
            let mut lex = PosLexicon::new();
            let mut class = None;
            for line in BUNDLED.lines().map(str::trim) {
                if line.starts_with('#') || line.is_empty() {
                    continue;
                }
                if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                    class = WordClass::from_section(name);
                    continue;
                }
                if let Some(c) = class {
                    for w in line.split_whitespace() {
                        lex.insert(w, c);
                    }
                }
            }
            lex
        })
    }

    /// Adds `word` unless it is already present.
    pub fn insert(&mut self, word: &str, class: WordClass) {
        let w = word.to_lowercase();
        if !self.words.contains_key(&w) {
            self.by_class.entry(class).or_default().push(w.clone());
            self.words.insert(w, class);
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Listed words of one class, in insertion order.
    pub fn words_of(&self, class: WordClass) -> &[String] {
        self.by_class.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn class_of(&self, word: &str) -> WordClass {
        let w = word.to_lowercase();
        if let Some(&c) = self.words.get(&w) {
            return c;
        }
        if !w.is_empty() && w.chars().all(|c| c.is_ascii_digit()) {
            WordClass::Numeral
        } else if w.len() > 3 && w.ends_with("ly") {
            WordClass::Adverb
        } else if w.len() > 4 && (w.ends_with("ing") || w.ends_with("ed")) {
            WordClass::Verb
        } else {
            WordClass::Other
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_size_and_lookups() {
        let lex = PosLexicon::bundled();
        assert!(lex.len() >= 1500, "{}", lex.len());
        assert_eq!(lex.class_of("car"), WordClass::Noun);
        assert_eq!(lex.class_of("Red"), WordClass::Adjective);
        assert_eq!(lex.class_of("under"), WordClass::Preposition);
        assert_eq!(lex.class_of("the"), WordClass::Other);
    }

    #[test]
    fn suffix_fallbacks() {
        let lex = PosLexicon::new();
        assert_eq!(lex.class_of("42"), WordClass::Numeral);
        assert_eq!(lex.class_of("swiftly"), WordClass::Adverb);
        assert_eq!(lex.class_of("zooming"), WordClass::Verb);
        assert_eq!(lex.class_of("zoomed"), WordClass::Verb);
        assert_eq!(lex.class_of("qwzx"), WordClass::Other);
    }
}
