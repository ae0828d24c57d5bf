use super::KW_TOKEN;

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'\'' || !b.is_ascii()
}

/// Replaces every keyword occurrence with the literal `<kw>` token.
///
/// Matching is ASCII case-insensitive on whole-word boundaries, scanning left
/// to right and trying the longest keyword first at each position. Text that
/// does not belong to a match is copied through unchanged.
pub fn rewrite_keywords(text: &str, keywords: &[impl AsRef<str>]) -> String {
    let mut phrases: Vec<&[u8]> = keywords
        .iter()
        .map(|k| k.as_ref().trim().as_bytes())
        .filter(|k| !k.is_empty())
        .collect();
    phrases.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));

    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut copied_to = 0;
    let mut i = 0;
    while i < bytes.len() {
        let at_word_start = i == 0 || !is_word_byte(bytes[i - 1]);
        if at_word_start && is_word_byte(bytes[i]) {
            let hit = phrases.iter().find(|p| {
                let end = i + p.len();
                end <= bytes.len()
                    && bytes[i..end].eq_ignore_ascii_case(p)
                    && (end == bytes.len() || !is_word_byte(bytes[end]))
            });
            if let Some(p) = hit {
                out.push_str(&text[copied_to..i]);
                out.push_str(KW_TOKEN);
                i += p.len();
                copied_to = i;
                continue;
            }
        }
        i += 1;
    }
    out.push_str(&text[copied_to..]);
    out
}
