//! Prompt templates shipped with the crate. Each carries a content hash so
//! run manifests can pin the exact text used.

use sha2::{Digest, Sha256};

pub const STRATEGIST_SYSTEM: &str = include_str!("../../prompts/strategist_system.txt");
pub const STRATEGIST_USER: &str = include_str!("../../prompts/strategist_user.txt");
pub const QUALE_SYSTEM: &str = include_str!("../../prompts/quale_system.txt");
pub const MODEL_DESCRIPTION: &str = include_str!("../../prompts/model_description.txt");
pub const BENCH_SYSTEM: &str = include_str!("../../prompts/bench_system.txt");
pub const ENHANCED_RULES: &str = include_str!("../../prompts/enhanced_rules.txt");

pub const ALL: [(&str, &str); 6] = [
    ("strategist_system", STRATEGIST_SYSTEM),
    ("strategist_user", STRATEGIST_USER),
    ("quale_system", QUALE_SYSTEM),
    ("model_description", MODEL_DESCRIPTION),
    ("bench_system", BENCH_SYSTEM),
    ("enhanced_rules", ENHANCED_RULES),
];

/// First 12 hex digits of the SHA-256 of a template.
pub fn version(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// `(name, version)` for every template.
pub fn versions() -> Vec<(String, String)> {
    ALL.iter()
        .map(|(n, t)| (n.to_string(), version(t)))
        .collect()
}

/// Replaces `{{key}}` placeholders.
pub fn render(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_fills_placeholders() {
        assert_eq!(render("a {{x}} b {{x}}", &[("x", "1".into())]), "a 1 b 1");
    }

    #[test]
    fn versions_are_stable_hex() {
        let v = version("abc");
        assert_eq!(v, "ba7816bf8f01");
        assert_eq!(versions().len(), 6);
    }
}
