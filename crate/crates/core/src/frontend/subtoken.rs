//! Identifier subtokens and comment word tokenization.

/// Splits an identifier into lowercase subtokens.
///
/// Boundaries: lower→upper (`camelCase`), the last capital of an uppercase
/// run followed by a lowercase letter (`HTTPResponse` → `http`, `response`),
/// letter/digit transitions, and underscores or dollar signs (dropped).
pub fn split_identifier(name: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut parts = Vec::new();
    let mut current = String::new();

    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || c == '$' {
            flush(&mut current, &mut parts);
            continue;
        }
        if let Some(&prev) = i.checked_sub(1).map(|j| &chars[j]) {
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_lowercase() && c.is_uppercase())
                || (prev.is_uppercase()
                    && c.is_uppercase()
                    && next.is_some_and(|n| n.is_lowercase()))
                || (prev.is_alphabetic() && c.is_ascii_digit())
                || (prev.is_ascii_digit() && c.is_alphabetic());
            if boundary {
                flush(&mut current, &mut parts);
            }
        }
        current.extend(c.to_lowercase());
    }
    flush(&mut current, &mut parts);

    if parts.is_empty() && !name.is_empty() {
        // All separators, e.g. `_`; keep the identifier itself.
        parts.push(name.to_lowercase());
    }
    parts
}

fn flush(current: &mut String, parts: &mut Vec<String>) {
    if !current.is_empty() {
        parts.push(std::mem::take(current));
    }
}

/// Lowercases a natural-language comment and splits it into words.
/// Punctuation marks become words of their own.
pub fn tokenize_comment(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            flush(&mut current, &mut words);
        } else if c.is_alphanumeric() || c == '_' {
            current.extend(c.to_lowercase());
        } else {
            flush(&mut current, &mut words);
            words.push(c.to_string());
        }
    }
    flush(&mut current, &mut words);
    words
}
