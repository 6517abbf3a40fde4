//! Versioned prompt templates with `{name}` placeholders.

pub const EDITOR_V1: &str = include_str!("../assets/templates/editor.v1.txt");
pub const FUSION_V1: &str = include_str!("../assets/templates/fusion.v1.txt");
pub const FUSION_RESTATE_V1: &str = include_str!("../assets/templates/fusion_restate.v1.txt");

/// Single-pass substitution: values are inserted verbatim and never rescanned,
/// so a value containing `{name}` cannot trigger a second substitution.
/// Unknown placeholders are left as written.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after
            .find('}')
            .and_then(|close| vars.iter().find(|(n, _)| *n == &after[..close]).map(|(_, v)| (close, *v)));
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_known_names_once() {
        let s = render("a {x} b {y} {z}", &[("x", "{y}"), ("y", "2")]);
        assert_eq!(s, "a {y} b 2 {z}");
    }

    #[test]
    fn bundled_templates_have_their_placeholders() {
        for (t, names) in [
            (EDITOR_V1, &["{route}", "{findings}", "{query}"][..]),
            (FUSION_V1, &["{edge_prefix}", "{cloud_response}"][..]),
            (FUSION_RESTATE_V1, &["{cloud_response}"][..]),
        ] {
            for n in names {
                assert!(t.contains(n), "{n} missing");
            }
        }
    }
}
