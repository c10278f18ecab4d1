use std::collections::{BTreeMap, BTreeSet};

use super::is_reserved;

/// Maps free-form text onto the identifier charset. Whitespace and other
/// disallowed characters become `_`, casing is kept, and a name that would
/// not start with a letter gets a `P` prefix.
pub fn sanitize_identifier(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut last_underscore = false;
    for c in raw.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
            last_underscore = false;
        } else if !last_underscore && !out.is_empty() {
            out.push('_');
            last_underscore = true;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    if !out.starts_with(|c: char| c.is_ascii_alphabetic()) {
        out.insert(0, 'P');
    }
    if is_reserved(&out) {
        out.push('_');
        out.push('1');
    }
    out
}

/// Sanitises names consistently across a theory. Distinct raw names that
/// collapse onto the same identifier are suffixed `_2`, `_3`, ... in order of
/// first appearance.
#[derive(Debug, Default, Clone)]
pub struct NameTable {
    assigned: BTreeMap<String, String>,
    taken: BTreeSet<String>,
}

impl NameTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn resolve(&mut self, raw: &str) -> String {
        if let Some(name) = self.assigned.get(raw) {
            return name.clone();
        }
        let base = sanitize_identifier(raw);
        let mut candidate = base.clone();
        let mut n = 2;
        while self.taken.contains(&candidate) {
            candidate = format!("{base}_{n}");
            n += 1;
        }
        self.taken.insert(candidate.clone());
        self.assigned.insert(raw.to_string(), candidate.clone());
        candidate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spaces_become_underscores_and_case_is_kept() {
        assert_eq!(sanitize_identifier("In Front Of"), "In_Front_Of");
        assert_eq!(sanitize_identifier("  looking-through "), "looking_through");
        assert_eq!(sanitize_identifier("3D"), "P3D");
        assert_eq!(sanitize_identifier(""), "P");
        assert_eq!(sanitize_identifier("forall"), "forall_1");
    }

    #[test]
    fn collisions_are_suffixed_in_order() {
        let mut t = NameTable::new();
        assert_eq!(t.resolve("in front"), "in_front");
        assert_eq!(t.resolve("in-front"), "in_front_2");
        assert_eq!(t.resolve("in.front"), "in_front_3");
        assert_eq!(t.resolve("in front"), "in_front");
    }
}
