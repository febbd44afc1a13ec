use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Ordered set of class names. Position in the map is the class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct ClassMap {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ClassMap {
    /// Builds a map from names in the given order. Duplicates keep their first
    /// position.
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Self {
            names: Vec::new(),
            index: HashMap::new(),
        };
        for name in names {
            let name = name.into();
            if !out.index.contains_key(&name) {
                out.index.insert(name.clone(), out.names.len());
                out.names.push(name);
            }
        }
        out
    }

    /// Builds a map with names sorted lexicographically.
    pub fn sorted<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.names.iter().enumerate().map(|(i, n)| (i, n.as_str()))
    }
}

impl From<Vec<String>> for ClassMap {
    fn from(names: Vec<String>) -> Self {
        Self::new(names)
    }
}

impl From<ClassMap> for Vec<String> {
    fn from(map: ClassMap) -> Self {
        map.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_insertion_order() {
        let map = ClassMap::new(["walk", "jog", "walk", "sit"]);
        assert_eq!(map.len(), 3);
        assert_eq!(map.id("jog"), Some(1));
        assert_eq!(map.name(2), Some("sit"));
        assert_eq!(map.id("swim"), None);
    }

    #[test]
    fn sorted_is_lexicographic() {
        let map = ClassMap::sorted(["b", "a", "c", "a"]);
        assert_eq!(map.names(), ["a", "b", "c"]);
    }
}
