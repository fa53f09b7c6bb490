use serde::{Deserialize, Serialize};

/// A sentence of a normalized document body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    /// Byte offsets `[start, end)` into the body.
    pub char_span: (usize, usize),
}

/// Words that end in a period without ending a sentence, lowercased and
/// without the final period.
pub const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "ca", "cf", "co", "corp", "dept", "dr", "e.g", "ed", "eds", "eq", "eqs", "est",
    "et al", "fig", "figs", "i.e", "inc", "jr", "ltd", "mr", "mrs", "ms", "no", "nos", "prof",
    "ref", "refs", "sec", "sect", "sp", "spp", "sr", "st", "suppl", "tab", "univ", "viz", "vol",
    "vols", "vs",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// True when the word ending right before byte offset `dot` is a listed
/// abbreviation.
fn ends_with_abbreviation(body: &str, sentence_start: usize, dot: usize) -> bool {
    let head = &body[sentence_start..dot];
    let word = head.rsplit(char::is_whitespace).next().unwrap_or("");
    let word = word.trim_start_matches(OPENERS).to_lowercase();
    !word.is_empty() && ABBREVIATIONS.contains(&word.as_str())
}

/// Splits on `.`, `!` or `?` (plus any trailing closing quotes or brackets)
/// when followed by whitespace and an uppercase letter or digit, unless the
/// period closes a listed abbreviation. Text without a terminator is one
/// sentence.
pub fn split_sentences(body: &str) -> Vec<Sentence> {
    let chars: Vec<(usize, char)> = body.char_indices().collect();
    let len = chars.len();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let push = |out: &mut Vec<Sentence>, s: usize, e: usize| {
        let text = &body[s..e];
        if !text.is_empty() {
            out.push(Sentence {
                index: out.len(),
                text: text.to_string(),
                char_span: (s, e),
            });
        }
    };

    let mut i = 0;
    while i < len {
        let (pos, c) = chars[i];
        let Some(s) = start else {
            if !c.is_whitespace() {
                start = Some(pos);
            } else {
                i += 1;
            }
            continue;
        };
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < len && (is_terminator(chars[j].1) || CLOSERS.contains(&chars[j].1)) {
            j += 1;
        }
        if j < len && chars[j].1.is_whitespace() {
            let mut k = j;
            while k < len && chars[k].1.is_whitespace() {
                k += 1;
            }
            let mut m = k;
            while m < len && OPENERS.contains(&chars[m].1) {
                m += 1;
            }
            let starts_sentence =
                m < len && (chars[m].1.is_uppercase() || chars[m].1.is_ascii_digit());
            let abbreviation = c == '.' && ends_with_abbreviation(body, s, pos);
            if starts_sentence && !abbreviation {
                push(&mut out, s, chars[j].0);
                start = None;
                i = k;
                continue;
            }
        }
        i = j;
    }
    if let Some(s) = start {
        push(&mut out, s, body.trim_end().len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(body: &str) -> Vec<String> {
        split_sentences(body).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn one_sentence_per_terminator() {
        assert_eq!(texts("A. B? C!"), ["A.", "B?", "C!"]);
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        assert_eq!(texts("No terminator"), ["No terminator"]);
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(
            texts("Dr. Smith measured pH 7. The result held."),
            ["Dr. Smith measured pH 7.", "The result held."]
        );
        assert_eq!(
            texts("As shown by Lee et al. In 2020 it rose."),
            ["As shown by Lee et al. In 2020 it rose."]
        );
        assert_eq!(
            texts("See Fig. 2 for details. It is clear."),
            ["See Fig. 2 for details.", "It is clear."]
        );
    }

    #[test]
    fn lowercase_continuation_and_decimals() {
        assert_eq!(
            texts("Values were 7.5 mg. then dropped. Next."),
            ["Values were 7.5 mg. then dropped.", "Next."]
        );
    }

    #[test]
    fn closers_and_openers() {
        assert_eq!(
            texts("He said \"stop.\" (Then he left.) Done"),
            ["He said \"stop.\"", "(Then he left.)", "Done"]
        );
        assert_eq!(
            texts("Really?! Yes... 42 people came."),
            ["Really?!", "Yes...", "42 people came."]
        );
    }

    #[test]
    fn spans_index_the_body() {
        let body = "First one. Second one! Third";
        let sentences = split_sentences(body);
        let mut prev_end = 0;
        for s in &sentences {
            assert!(s.char_span.0 >= prev_end);
            assert_eq!(&body[s.char_span.0..s.char_span.1], s.text);
            prev_end = s.char_span.1;
        }
        assert_eq!(prev_end, body.len());
    }
}
