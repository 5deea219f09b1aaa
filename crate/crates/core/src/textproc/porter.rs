//! Porter-style suffix stripping.
//!
//! `porter_pass` is a faithful single pass of the classic algorithm
//! (steps 1a through 5b, longest-match-then-condition semantics).
//! The public [`stem`] iterates the pass to a fixpoint so that
//! `stem(stem(x)) == stem(x)` holds unconditionally; the raw algorithm is
//! not idempotent for a handful of words (e.g. "troubled" -> "trouble"
//! -> "troubl").

/// Stem a lowercase token. Tokens containing anything outside `a-z`
/// (digits, apostrophes) are returned unchanged.
pub fn stem(token: &str) -> String {
    if token.len() <= 2 || !token.bytes().all(|b| b.is_ascii_lowercase()) {
        return token.to_string();
    }
    let mut cur = token.to_string();
    for _ in 0..8 {
        let next = porter_pass(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// One full pass of the Porter algorithm.
pub fn porter_pass(word: &str) -> String {
    let mut w: Vec<u8> = word.bytes().collect();
    if w.len() <= 2 {
        return word.to_string();
    }
    step_1a(&mut w);
    step_1b(&mut w);
    step_1c(&mut w);
    step_2(&mut w);
    step_3(&mut w);
    step_4(&mut w);
    step_5a(&mut w);
    step_5b(&mut w);
    String::from_utf8(w).expect("ascii")
}

fn is_consonant(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

/// Porter measure m of w[..len]: [C](VC)^m[V].
fn measure(w: &[u8], len: usize) -> usize {
    let mut m = 0;
    let mut i = 0;
    // skip initial consonants
    while i < len && is_consonant(w, i) {
        i += 1;
    }
    loop {
        // vowels
        while i < len && !is_consonant(w, i) {
            i += 1;
        }
        if i >= len {
            return m;
        }
        // consonants
        while i < len && is_consonant(w, i) {
            i += 1;
        }
        m += 1;
        if i >= len {
            return m;
        }
    }
}

fn contains_vowel(w: &[u8], len: usize) -> bool {
    (0..len).any(|i| !is_consonant(w, i))
}

fn ends_double_consonant(w: &[u8]) -> bool {
    let n = w.len();
    n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1)
}

/// *o: stem ends consonant-vowel-consonant and the final consonant is
/// not w, x, or y.
fn ends_cvc(w: &[u8], len: usize) -> bool {
    if len < 3 {
        return false;
    }
    is_consonant(w, len - 3)
        && !is_consonant(w, len - 2)
        && is_consonant(w, len - 1)
        && !matches!(w[len - 1], b'w' | b'x' | b'y')
}

fn ends_with(w: &[u8], suffix: &str) -> bool {
    let s = suffix.as_bytes();
    w.len() >= s.len() && &w[w.len() - s.len()..] == s
}

fn stem_len(w: &[u8], suffix: &str) -> usize {
    w.len() - suffix.len()
}

fn replace_suffix(w: &mut Vec<u8>, suffix: &str, replacement: &str) {
    let keep = w.len() - suffix.len();
    w.truncate(keep);
    w.extend_from_slice(replacement.as_bytes());
}

fn step_1a(w: &mut Vec<u8>) {
    if ends_with(w, "sses") {
        replace_suffix(w, "sses", "ss");
    } else if ends_with(w, "ies") {
        replace_suffix(w, "ies", "i");
    } else if ends_with(w, "ss") {
        // unchanged
    } else if ends_with(w, "s") {
        replace_suffix(w, "s", "");
    }
}

fn step_1b(w: &mut Vec<u8>) {
    if ends_with(w, "eed") {
        if measure(w, stem_len(w, "eed")) > 0 {
            replace_suffix(w, "eed", "ee");
        }
        return;
    }
    let fired = if ends_with(w, "ed") && contains_vowel(w, stem_len(w, "ed")) {
        replace_suffix(w, "ed", "");
        true
    } else if ends_with(w, "ing") && contains_vowel(w, stem_len(w, "ing")) {
        replace_suffix(w, "ing", "");
        true
    } else {
        false
    };
    if !fired {
        return;
    }
    if ends_with(w, "at") {
        replace_suffix(w, "at", "ate");
    } else if ends_with(w, "bl") {
        replace_suffix(w, "bl", "ble");
    } else if ends_with(w, "iz") {
        replace_suffix(w, "iz", "ize");
    } else if ends_double_consonant(w) && !matches!(w[w.len() - 1], b'l' | b's' | b'z') {
        w.truncate(w.len() - 1);
    } else if measure(w, w.len()) == 1 && ends_cvc(w, w.len()) {
        w.push(b'e');
    }
}

fn step_1c(w: &mut Vec<u8>) {
    if ends_with(w, "y") && contains_vowel(w, stem_len(w, "y")) {
        let n = w.len();
        w[n - 1] = b'i';
    }
}

/// (suffix, replacement) pairs; the longest matching suffix wins and then
/// the m > threshold condition is tested on the stem.
fn apply_table(w: &mut Vec<u8>, table: &[(&str, &str)], min_m: usize) {
    let mut best: Option<(&str, &str)> = None;
    for &(suf, rep) in table {
        if ends_with(w, suf) {
            match best {
                Some((b, _)) if b.len() >= suf.len() => {}
                _ => best = Some((suf, rep)),
            }
        }
    }
    if let Some((suf, rep)) = best {
        if measure(w, stem_len(w, suf)) > min_m {
            replace_suffix(w, suf, rep);
        }
    }
}

fn step_2(w: &mut Vec<u8>) {
    apply_table(
        w,
        &[
            ("ational", "ate"),
            ("tional", "tion"),
            ("enci", "ence"),
            ("anci", "ance"),
            ("izer", "ize"),
            ("abli", "able"),
            ("alli", "al"),
            ("entli", "ent"),
            ("eli", "e"),
            ("ousli", "ous"),
            ("ization", "ize"),
            ("ation", "ate"),
            ("ator", "ate"),
            ("alism", "al"),
            ("iveness", "ive"),
            ("fulness", "ful"),
            ("ousness", "ous"),
            ("aliti", "al"),
            ("iviti", "ive"),
            ("biliti", "ble"),
        ],
        0,
    );
}

fn step_3(w: &mut Vec<u8>) {
    apply_table(
        w,
        &[
            ("icate", "ic"),
            ("ative", ""),
            ("alize", "al"),
            ("iciti", "ic"),
            ("ical", "ic"),
            ("ful", ""),
            ("ness", ""),
        ],
        0,
    );
}

fn step_4(w: &mut Vec<u8>) {
    // ION carries the extra *S-or-*T condition; handle the longest match
    // manually before falling back to the plain table.
    const TABLE: &[&str] = &[
        "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent", "ou",
        "ism", "ate", "iti", "ous", "ive", "ize",
    ];
    let mut best: Option<&str> = None;
    for &suf in TABLE {
        if ends_with(w, suf) {
            match best {
                Some(b) if b.len() >= suf.len() => {}
                _ => best = Some(suf),
            }
        }
    }
    if ends_with(w, "ion") && best.map_or(true, |b| b.len() < 3) {
        let sl = stem_len(w, "ion");
        if measure(w, sl) > 1 && sl >= 1 && matches!(w[sl - 1], b's' | b't') {
            replace_suffix(w, "ion", "");
        }
        return;
    }
    if let Some(suf) = best {
        if measure(w, stem_len(w, suf)) > 1 {
            replace_suffix(w, suf, "");
        }
    }
}

fn step_5a(w: &mut Vec<u8>) {
    if ends_with(w, "e") {
        let sl = stem_len(w, "e");
        let m = measure(w, sl);
        if m > 1 || (m == 1 && !ends_cvc(w, sl)) {
            w.truncate(sl);
        }
    }
}

fn step_5b(w: &mut Vec<u8>) {
    if measure(w, w.len()) > 1 && ends_double_consonant(w) && w[w.len() - 1] == b'l' {
        w.truncate(w.len() - 1);
    }
}
