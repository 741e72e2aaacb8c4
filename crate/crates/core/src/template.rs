//! Prompt and intervention text assets with `${name}` substitution.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::task::EnvKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("missing template '{0}'")]
    MissingTemplate(String),
    #[error("template left placeholder '${{{0}}}' unfilled")]
    Unfilled(String),
}

pub struct PromptTemplate {
    pub system: &'static str,
    pub task: &'static str,
}

pub fn prompt_template(env: EnvKind) -> PromptTemplate {
    match env {
        EnvKind::ListWorld => PromptTemplate {
            system: include_str!("../assets/prompts/listworld_system.txt"),
            task: include_str!("../assets/prompts/listworld_task.txt"),
        },
        EnvKind::TreeWorld => PromptTemplate {
            system: include_str!("../assets/prompts/treeworld_system.txt"),
            task: include_str!("../assets/prompts/treeworld_task.txt"),
        },
        EnvKind::GridWorld => PromptTemplate {
            system: include_str!("../assets/prompts/gridworld_system.txt"),
            task: include_str!("../assets/prompts/gridworld_task.txt"),
        },
    }
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn interventions() -> &'static Sections {
    static CELL: OnceLock<Sections> = OnceLock::new();
    CELL.get_or_init(|| {
        toml::from_str(include_str!("../assets/interventions.toml"))
            .expect("interventions.toml is valid")
    })
}

/// Looks up an intervention template by section (`common` or an env name) and key.
pub fn intervention(section: &str, key: &str) -> Result<&'static str, TemplateError> {
    interventions()
        .get(section)
        .and_then(|s| s.get(key))
        .map(String::as_str)
        .ok_or_else(|| TemplateError::MissingTemplate(format!("{section}.{key}")))
}

/// Replaces every `${name}` with its value. Placeholders without a value are an error.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = &after[..end];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TemplateError::Unfilled(name.to_string()))?;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_repeated_placeholders() {
        assert_eq!(
            fill("${a} x ${a}, ${b}", &[("a", "3"), ("b", "q")]).unwrap(),
            "3 x 3, q"
        );
        assert_eq!(fill("${a}", &[]), Err(TemplateError::Unfilled("a".into())));
    }

    #[test]
    fn every_env_has_templates() {
        for env in EnvKind::ALL {
            let t = prompt_template(env);
            assert!(t.system.contains("```python"));
            assert!(t.task.starts_with("==="));
            assert!(intervention(env.as_str(), "state").is_ok() || env == EnvKind::ListWorld);
        }
        assert!(matches!(
            intervention("listworld", "nope"),
            Err(TemplateError::MissingTemplate(_))
        ));
    }

    #[test]
    fn prompt_text_is_verbatim() {
        let list = prompt_template(EnvKind::ListWorld);
        assert!(list
            .task
            .contains("Initial list: ${initial_list}\nTarget list: ${target_list}\n"));
        assert!(list
            .system
            .contains("Index of the elements after the removed one will be reduced by 1."));
        let grid = prompt_template(EnvKind::GridWorld);
        assert!(grid.task.contains("- Board size: ${size} x ${size}\n"));
        assert!(grid.system.contains("penalty of 3 additional moves"));
        let tree = prompt_template(EnvKind::TreeWorld);
        assert!(tree
            .system
            .starts_with("You are a reasoning agent searching a tree"));
        assert!(tree
            .system
            .contains("you are given: \"UNKNOWN\" in place of the children ids."));
    }
}
