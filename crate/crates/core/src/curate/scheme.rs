//! Ordered class schemes and adjacent-class merging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current class roster plus the order-preserving surjection from the
/// original class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScheme {
    /// Names of the current classes, in order.
    pub names: Vec<String>,
    /// Original class index -> current class index.
    pub map: Vec<usize>,
}

impl ClassScheme {
    pub fn identity(names: Vec<String>) -> ClassScheme {
        let map = (0..names.len()).collect();
        ClassScheme { names, map }
    }

    pub fn n_classes(&self) -> usize {
        self.names.len()
    }

    pub fn n_original(&self) -> usize {
        self.map.len()
    }

    /// Current label for an original label.
    pub fn apply(&self, original: usize) -> usize {
        self.map[original]
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.n_classes();
        if self.map.is_empty() || c == 0 {
            return Err(Error::Input("empty class scheme".into()));
        }
        let mut hit = vec![false; c];
        let mut prev = 0usize;
        for (i, &m) in self.map.iter().enumerate() {
            if m >= c {
                return Err(Error::Input(format!("scheme maps class {i} past the roster")));
            }
            if i > 0 && m < prev {
                return Err(Error::Input("scheme map is not order-preserving".into()));
            }
            prev = m;
            hit[m] = true;
        }
        if hit.iter().any(|&h| !h) {
            return Err(Error::Input("scheme map is not surjective".into()));
        }
        Ok(())
    }

    /// Short history label such as "7-class".
    pub fn describe(&self) -> String {
        format!("{}-class", self.n_classes())
    }
}

/// A group of current class indices to merge. The group must be contiguous
/// in class order. Without an explicit name the merged class joins its
/// members' names with '+'.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub classes: Vec<usize>,
    #[serde(default)]
    pub name: Option<String>,
}

impl MergeGroup {
    pub fn of(classes: &[usize]) -> MergeGroup {
        MergeGroup { classes: classes.to_vec(), name: None }
    }

    pub fn named(classes: &[usize], name: &str) -> MergeGroup {
        MergeGroup { classes: classes.to_vec(), name: Some(name.to_string()) }
    }
}

/// Merge groups of adjacent classes in the current scheme, producing a new
/// scheme whose map still runs from the original space.
pub fn merge_classes(scheme: &ClassScheme, groups: &[MergeGroup]) -> Result<ClassScheme> {
    scheme.validate()?;
    let c = scheme.n_classes();
    // Group id per current class: usize::MAX means untouched.
    let mut group_of = vec![usize::MAX; c];
    for (g, group) in groups.iter().enumerate() {
        if group.classes.is_empty() {
            return Err(Error::Input("empty merge group".into()));
        }
        let mut sorted = group.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != group.classes.len() {
            return Err(Error::Input("merge group repeats a class".into()));
        }
        for window in sorted.windows(2) {
            if window[1] != window[0] + 1 {
                return Err(Error::Input(format!(
                    "merge group {sorted:?} is not contiguous in class order"
                )));
            }
        }
        for &cls in &sorted {
            if cls >= c {
                return Err(Error::Input(format!("merge group names class {cls} of {c}")));
            }
            if group_of[cls] != usize::MAX {
                return Err(Error::Input(format!("class {cls} appears in two merge groups")));
            }
            group_of[cls] = g;
        }
    }

    // Walk current classes in order, assigning new indices.
    let mut current_to_new = vec![usize::MAX; c];
    let mut names: Vec<String> = Vec::new();
    let mut cls = 0usize;
    while cls < c {
        let new_idx = names.len();
        if group_of[cls] == usize::MAX {
            current_to_new[cls] = new_idx;
            names.push(scheme.names[cls].clone());
            cls += 1;
        } else {
            let g = group_of[cls];
            let members: Vec<usize> = (cls..c).take_while(|&k| group_of[k] == g).collect();
            let name = groups[g].name.clone().unwrap_or_else(|| {
                members.iter().map(|&k| scheme.names[k].as_str()).collect::<Vec<_>>().join("+")
            });
            for &k in &members {
                current_to_new[k] = new_idx;
            }
            names.push(name);
            cls += members.len();
        }
    }

    let map: Vec<usize> = scheme.map.iter().map(|&m| current_to_new[m]).collect();
    let merged = ClassScheme { names, map };
    merged.validate()?;
    Ok(merged)
}

/// Push labels or predictions through a class map.
pub fn apply_map(values: &[usize], map: &[usize]) -> Vec<usize> {
    values.iter().map(|&v| map[v]).collect()
}
