use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_unit_norm, component_key, validate_name, NormPolicy, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub name: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub class_embedding: Vec<f32>,
    #[serde(default)]
    pub components: Vec<ComponentEntry>,
    /// Amorphous classes without components; scored by the posterior alone.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub global_only: bool,
}

impl ClassEntry {
    pub fn component_keys(&self) -> impl Iterator<Item = String> + '_ {
        self.components.iter().map(|c| component_key(&self.name, &c.name))
    }
}

/// Per-class component vocabulary with text embeddings.
///
/// Class order is authoritative: argmax ties resolve to the lowest index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentVocabulary {
    dim: usize,
    classes: Vec<ClassEntry>,
}

impl ComponentVocabulary {
    /// Builds a vocabulary, enforcing every invariant.
    pub fn new(dim: usize, classes: Vec<ClassEntry>, policy: NormPolicy) -> Result<Self, StoreError> {
        let mut vocab = ComponentVocabulary { dim, classes };
        vocab.validate(policy)?;
        Ok(vocab)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn class(&self, name: &str) -> Option<&ClassEntry> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn from_json_str(text: &str, policy: NormPolicy) -> Result<Self, StoreError> {
        let raw: ComponentVocabulary =
            serde_json::from_str(text).map_err(|e| StoreError::MalformedFile(format!("vocabulary: {e}")))?;
        Self::new(raw.dim, raw.classes, policy)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("vocabulary serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>, policy: NormPolicy) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        Self::from_json_str(&text, policy)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let mut text = self.to_json_string();
        text.push('\n');
        fs::write(path, text).map_err(|e| StoreError::io(path, e))
    }

    fn validate(&mut self, policy: NormPolicy) -> Result<(), StoreError> {
        let malformed = |msg: String| StoreError::MalformedFile(format!("vocabulary: {msg}"));
        if self.dim == 0 {
            return Err(malformed("dim must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(malformed("no classes".into()));
        }
        let dim = self.dim;
        let mut seen = BTreeSet::new();
        for class in &mut self.classes {
            validate_name("class", &class.name).map_err(|e| malformed(e.to_string()))?;
            if !seen.insert(class.name.clone()) {
                return Err(malformed(format!("duplicate class {:?}", class.name)));
            }
            if class.components.is_empty() && !class.global_only {
                return Err(malformed(format!(
                    "class {:?} has no components and is not flagged global_only",
                    class.name
                )));
            }
            if class.class_embedding.len() != dim {
                return Err(malformed(format!(
                    "class {:?} embedding has dimension {} (expected {dim})",
                    class.name,
                    class.class_embedding.len()
                )));
            }
            let class_name = class.name.clone();
            check_unit_norm(
                || format!("class {class_name:?} embedding"),
                &mut class.class_embedding,
                policy,
            )?;
            let mut component_names = BTreeSet::new();
            for component in &mut class.components {
                validate_name("component", &component.name).map_err(|e| malformed(e.to_string()))?;
                if !component_names.insert(component.name.clone()) {
                    return Err(malformed(format!(
                        "duplicate component {:?} in class {class_name:?}",
                        component.name
                    )));
                }
                if component.embedding.len() != dim {
                    return Err(malformed(format!(
                        "component {:?} has dimension {} (expected {dim})",
                        component_key(&class_name, &component.name),
                        component.embedding.len()
                    )));
                }
                let key = component_key(&class_name, &component.name);
                check_unit_norm(
                    || format!("component {key:?} embedding"),
                    &mut component.embedding,
                    policy,
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, axis: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    fn two_by_two() -> String {
        let class = |name: &str, base: usize| ClassEntry {
            name: name.into(),
            class_embedding: unit(6, base),
            components: vec![
                ComponentEntry {
                    name: "head".into(),
                    embedding: unit(6, base + 1),
                },
                ComponentEntry {
                    name: "tail".into(),
                    embedding: unit(6, base + 2),
                },
            ],
            global_only: false,
        };
        ComponentVocabulary {
            dim: 6,
            classes: vec![class("cat", 0), class("dog", 3)],
        }
        .to_json_string()
    }

    #[test]
    fn loads_well_formed_vocabulary() {
        let v = ComponentVocabulary::from_json_str(&two_by_two(), NormPolicy::Reject).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.classes().iter().all(|c| c.components.len() == 2));
        assert_eq!(v.class_index("dog"), Some(1));
    }

    #[test]
    fn rejects_short_embedding_norm() {
        let text = two_by_two().replacen("[1.0,", "[0.5,", 1);
        let err = ComponentVocabulary::from_json_str(&text, NormPolicy::Reject).unwrap_err();
        assert!(matches!(err, StoreError::NormViolation { .. }), "{err}");
    }

    #[test]
    fn renormalizes_on_request() {
        let text = two_by_two().replacen("[1.0,", "[0.5,", 1);
        let v = ComponentVocabulary::from_json_str(&text, NormPolicy::Renormalize).unwrap();
        for class in v.classes() {
            assert!((crate::vector::norm(&class.class_embedding) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn save_reload_is_byte_identical() {
        let v = ComponentVocabulary::from_json_str(&two_by_two(), NormPolicy::Reject).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        v.save(&path).unwrap();
        let first = fs::read(&path).unwrap();
        let reloaded = ComponentVocabulary::load(&path, NormPolicy::Reject).unwrap();
        assert_eq!(reloaded, v);
        reloaded.save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn rejects_componentless_class_without_flag() {
        let text = r#"{"dim":2,"classes":[{"name":"a","class_embedding":[1.0,0.0],"components":[]}]}"#;
        assert!(matches!(
            ComponentVocabulary::from_json_str(text, NormPolicy::Reject),
            Err(StoreError::MalformedFile(_))
        ));
        let text = r#"{"dim":2,"classes":[{"name":"a","class_embedding":[1.0,0.0],"global_only":true}]}"#;
        assert!(ComponentVocabulary::from_json_str(text, NormPolicy::Reject).is_ok());
    }

    #[test]
    fn rejects_dimension_mismatch_and_garbage() {
        let text = r#"{"dim":3,"classes":[{"name":"a","class_embedding":[1.0,0.0],"global_only":true}]}"#;
        assert!(ComponentVocabulary::from_json_str(text, NormPolicy::Reject).is_err());
        assert!(matches!(
            ComponentVocabulary::from_json_str("{not json", NormPolicy::Reject),
            Err(StoreError::MalformedFile(_))
        ));
    }
}
