//! Checks that `unsafe` appears only where it is allowed: the platform
//! layer of the core crate, and the one function in the memory pool that
//! carves a buffer window out of a DMA region.

use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsafeSite {
    /// Relative to the scanned root, with `/` separators.
    pub path: String,
    pub line: usize,
    /// Innermost preceding `fn` name, if any.
    pub function: Option<String>,
}

/// Directory prefixes where any `unsafe` is allowed.
pub const ALLOWED_DIRS: [&str; 1] = ["crates/core/src/platform/"];
/// Individual functions where `unsafe` is allowed.
pub const ALLOWED_FNS: [(&str, &str); 1] = [("crates/core/src/memory/mod.rs", "carve")];

pub fn is_allowed(site: &UnsafeSite) -> bool {
    ALLOWED_DIRS.iter().any(|d| site.path.starts_with(d))
        || ALLOWED_FNS
            .iter()
            .any(|(p, f)| site.path == *p && site.function.as_deref() == Some(*f))
}

/// Replaces comments, string literals and char literals with spaces,
/// keeping newlines so line numbers still match.
pub fn strip(src: &str) -> String {
    let b: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len());
    let blank = |out: &mut String, c: char| out.push(if c == '\n' { '\n' } else { ' ' });
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let next = b.get(i + 1).copied();
        if c == '/' && next == Some('/') {
            while i < b.len() && b[i] != '\n' {
                blank(&mut out, b[i]);
                i += 1;
            }
        } else if c == '/' && next == Some('*') {
            let mut depth = 0;
            while i < b.len() {
                if b[i] == '/' && b.get(i + 1) == Some(&'*') {
                    depth += 1;
                    out.push_str("  ");
                    i += 2;
                } else if b[i] == '*' && b.get(i + 1) == Some(&'/') {
                    depth -= 1;
                    out.push_str("  ");
                    i += 2;
                    if depth == 0 {
                        break;
                    }
                } else {
                    blank(&mut out, b[i]);
                    i += 1;
                }
            }
        } else if c == 'r' && matches!(next, Some('"') | Some('#')) && !prev_is_ident(&b, i) {
            let mut j = i + 1;
            let mut hashes = 0;
            while b.get(j) == Some(&'#') {
                hashes += 1;
                j += 1;
            }
            if b.get(j) != Some(&'"') {
                out.push(c);
                i += 1;
                continue;
            }
            j += 1;
            loop {
                match b.get(j) {
                    None => break,
                    Some('"') if (1..=hashes).all(|h| b.get(j + h) == Some(&'#')) => {
                        j += 1 + hashes;
                        break;
                    }
                    _ => j += 1,
                }
            }
            for &ch in &b[i..j.min(b.len())] {
                blank(&mut out, ch);
            }
            i = j;
        } else if c == '"' {
            blank(&mut out, c);
            i += 1;
            while i < b.len() && b[i] != '"' {
                if b[i] == '\\' {
                    blank(&mut out, b[i]);
                    i += 1;
                }
                if i < b.len() {
                    blank(&mut out, b[i]);
                    i += 1;
                }
            }
            if i < b.len() {
                blank(&mut out, b[i]);
                i += 1;
            }
        } else if c == '\'' {
            // A char literal, or a lifetime / label which is kept.
            let end = if next == Some('\\') {
                (i + 2..b.len()).find(|&j| b[j] == '\'')
            } else if b.get(i + 2) == Some(&'\'') {
                Some(i + 2)
            } else {
                None
            };
            match end {
                Some(e) => {
                    for &ch in &b[i..=e] {
                        blank(&mut out, ch);
                    }
                    i = e + 1;
                }
                None => {
                    out.push(c);
                    i += 1;
                }
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

fn prev_is_ident(b: &[char], i: usize) -> bool {
    i > 0 && (b[i - 1].is_alphanumeric() || b[i - 1] == '_')
}

fn is_ident(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Finds `unsafe` keyword uses in one file's source.
pub fn scan_source(path: &str, src: &str) -> Vec<UnsafeSite> {
    let code = strip(src);
    let chars: Vec<char> = code.chars().collect();
    let mut sites = Vec::new();
    let mut line = 1;
    let mut function: Option<String> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            i += 1;
            continue;
        }
        if is_ident(c) && (i == 0 || !is_ident(chars[i - 1])) {
            let start = i;
            while i < chars.len() && is_ident(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match word.as_str() {
                "unsafe" => sites.push(UnsafeSite {
                    path: path.to_string(),
                    line,
                    function: function.clone(),
                }),
                "fn" => {
                    let mut j = i;
                    while j < chars.len() && chars[j].is_whitespace() {
                        j += 1;
                    }
                    let s = j;
                    while j < chars.len() && is_ident(chars[j]) {
                        j += 1;
                    }
                    if j > s {
                        function = Some(chars[s..j].iter().collect());
                    }
                }
                _ => {}
            }
            continue;
        }
        i += 1;
    }
    sites
}

fn rust_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        let name = e.file_name();
        if p.is_dir() {
            if name != "target" && !name.to_string_lossy().starts_with('.') {
                rust_files(&p, out)?;
            }
        } else if p.extension().is_some_and(|x| x == "rs") {
            out.push(p);
        }
    }
    Ok(())
}

/// Every `unsafe` under `root/crates`.
pub fn scan_workspace(root: &Path) -> std::io::Result<Vec<UnsafeSite>> {
    let mut files = Vec::new();
    rust_files(&root.join("crates"), &mut files)?;
    let mut sites = Vec::new();
    for f in files {
        let rel = f
            .strip_prefix(root)
            .unwrap_or(&f)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        sites.extend(scan_source(&rel, &fs::read_to_string(&f)?));
    }
    Ok(sites)
}

pub fn violations(sites: &[UnsafeSite]) -> Vec<UnsafeSite> {
    sites.iter().filter(|s| !is_allowed(s)).cloned().collect()
}
