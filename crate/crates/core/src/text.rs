//! Word-level tokenization.
//!
//! Text is lowercased and split on whitespace. A chunk made only of
//! punctuation (such as `|` or `&&`) stays a single token; otherwise each
//! punctuation character is split off on its own. Letters, digits, `-` and a
//! `.` or `,` sitting between two digits stay inside words, so `125.8` and
//! `a-rosa` are single tokens.

fn is_word_char(chars: &[char], i: usize) -> bool {
    let c = chars[i];
    if c.is_alphanumeric() || c == '-' {
        return true;
    }
    if c == '.' || c == ',' {
        let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
        let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        return prev_digit && next_digit;
    }
    false
}

pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for chunk in lowered.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        if chars.iter().all(|c| !c.is_alphanumeric()) {
            out.push(chunk.to_string());
            continue;
        }
        let mut word = String::new();
        for i in 0..chars.len() {
            if is_word_char(&chars, i) {
                word.push(chars[i]);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(chars[i].to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_punctuation_and_keeps_decimals() {
        assert_eq!(
            tokenize("The A-Rosa Luna is 125.8 metres."),
            ["the", "a-rosa", "luna", "is", "125.8", "metres", "."]
        );
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n").is_empty());
    }

    #[test]
    fn separators_are_single_tokens() {
        assert_eq!(
            tokenize("A | country | B && A | leader | C"),
            ["a", "|", "country", "|", "b", "&&", "a", "|", "leader", "|", "c"]
        );
    }

    #[test]
    fn unit_suffix_stays_attached() {
        assert_eq!(tokenize("is 125.8m long"), ["is", "125.8m", "long"]);
    }

    proptest! {
        #[test]
        fn round_trip(text in "[ a-zA-Z0-9.,'|&()-]{0,60}") {
            let toks = tokenize(&text);
            prop_assert_eq!(tokenize(&detokenize(&toks)), toks);
        }

        #[test]
        fn detokenize_matches_up_to_whitespace_and_case(words in prop::collection::vec("[a-z]{1,8}", 0..10)) {
            let text = words.join("  ");
            prop_assert_eq!(detokenize(&tokenize(&text)), words.join(" "));
        }
    }
}
