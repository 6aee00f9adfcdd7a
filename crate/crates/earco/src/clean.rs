//! Local text cleaning for incident free-text fields.
//!
//! Raw incident summaries and root causes arrive full of markup noise:
//! HTML tags, pasted stack traces, embedded images. This module strips
//! them with a small documented grammar:
//!
//! - **HTML tag**: `<` + tag name + attributes + `>`, including closing
//!   tags (`</?[A-Za-z][^<>]*>`).
//! - **Image reference**: any `<img ...>` element (opening or closing),
//!   or a markdown image `![alt](url)`.
//! - **Stack-trace block**: two or more consecutive lines matching a
//!   frame pattern: leading whitespace, `at `, an identifier chain, and
//!   an optional `(file:line)` suffix. A lone frame line is kept.
//!
//! Cleaning only ever deletes, so the output is a character subsequence
//! of the input and surviving text is preserved verbatim. A single scan
//! can expose new matches (removing `<p>` from `<<p>b>` leaves `<b>`),
//! so [`clean_text`] loops to a fixed point, which makes it idempotent.

use std::sync::LazyLock;

use regex::Regex;

/// One stack frame line, matched against a whole line.
static FRAME_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[ \t]*at\s+[A-Za-z_$<][A-Za-z0-9_$.<>:/\\-]*\s*(\([^()]*\))?\s*$").unwrap()
});

/// Markdown image reference: `![alt](url)`.
static MD_IMAGE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"!\[[^\]]*\]\([^)]*\)").unwrap());

/// HTML tag, opening or closing, with attributes.
static HTML_TAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][^<>]*>").unwrap());

/// How many constructs a cleaning pass removed from one text field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleaningCounts {
    pub html_tags: usize,
    pub stacktrace_blocks: usize,
    pub image_refs: usize,
}

impl CleaningCounts {
    pub fn merge(&mut self, other: CleaningCounts) {
        self.html_tags += other.html_tags;
        self.stacktrace_blocks += other.stacktrace_blocks;
        self.image_refs += other.image_refs;
    }

    pub fn is_zero(&self) -> bool {
        self.html_tags == 0 && self.stacktrace_blocks == 0 && self.image_refs == 0
    }
}

/// Strip HTML tags, image references, and stack-trace blocks from `raw`.
///
/// Total function: never fails, empty input yields empty output. The
/// returned counts accumulate over every pass of the fixed-point loop.
pub fn clean_text(raw: &str) -> (String, CleaningCounts) {
    let mut text = raw.to_string();
    let mut counts = CleaningCounts::default();
    loop {
        let (next, pass) = clean_pass(&text);
        counts.merge(pass);
        // Every productive pass strictly shrinks the text, so this
        // terminates.
        if next == text {
            return (next, counts);
        }
        text = next;
    }
}

fn clean_pass(text: &str) -> (String, CleaningCounts) {
    let mut counts = CleaningCounts::default();
    let (text, blocks) = remove_stacktrace_blocks(text);
    counts.stacktrace_blocks = blocks;

    let (text, md_images) = remove_all(&text, &MD_IMAGE_RE);
    counts.image_refs += md_images;

    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in HTML_TAG_RE.find_iter(&text) {
        out.push_str(&text[last..m.start()]);
        last = m.end();
        if is_img_tag(m.as_str()) {
            counts.image_refs += 1;
        } else {
            counts.html_tags += 1;
        }
    }
    out.push_str(&text[last..]);
    (out, counts)
}

fn remove_all(text: &str, re: &Regex) -> (String, usize) {
    let mut removed = 0;
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in re.find_iter(text) {
        out.push_str(&text[last..m.start()]);
        last = m.end();
        removed += 1;
    }
    out.push_str(&text[last..]);
    (out, removed)
}

/// Drop maximal runs of >= 2 consecutive frame lines, terminators included.
fn remove_stacktrace_blocks(text: &str) -> (String, usize) {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let is_frame: Vec<bool> = lines
        .iter()
        .map(|line| FRAME_RE.is_match(line.trim_end_matches(['\n', '\r'])))
        .collect();

    let mut out = String::with_capacity(text.len());
    let mut blocks = 0;
    let mut i = 0;
    while i < lines.len() {
        if is_frame[i] {
            let mut j = i;
            while j < lines.len() && is_frame[j] {
                j += 1;
            }
            if j - i >= 2 {
                blocks += 1;
                i = j;
                continue;
            }
        }
        out.push_str(lines[i]);
        i += 1;
    }
    (out, blocks)
}

fn is_img_tag(tag: &str) -> bool {
    let name: String = tag
        .trim_start_matches('<')
        .trim_start_matches('/')
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect();
    name.eq_ignore_ascii_case("img")
}
