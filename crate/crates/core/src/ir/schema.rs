use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Numeric,
    Categorical,
    Boolean,
}

impl DataType {
    pub fn short_name(self) -> &'static str {
        match self {
            DataType::Numeric => "num",
            DataType::Categorical => "cat",
            DataType::Boolean => "bool",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DataType::Numeric => "numeric",
            DataType::Categorical => "categorical",
            DataType::Boolean => "boolean",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Field {
    pub name: String,
    #[serde(rename = "type")]
    pub data_type: DataType,
    #[serde(default)]
    pub nullable: bool,
}

impl Field {
    pub fn new(name: impl Into<String>, data_type: DataType, nullable: bool) -> Self {
        Field {
            name: name.into(),
            data_type,
            nullable,
        }
    }
}

/// Ordered list of uniquely named columns. Position is significant.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Self> {
        for (i, field) in fields.iter().enumerate() {
            if fields[..i].iter().any(|f| f.name == field.name) {
                return Err(Error::Plan(format!("duplicate column `{}` in schema", field.name)));
            }
        }
        Ok(Schema { fields })
    }

    pub fn empty() -> Self {
        Schema::default()
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    /// Appends a field; fails if the name is taken.
    pub fn push(&mut self, field: Field) -> Result<()> {
        if self.contains(&field.name) {
            return Err(Error::Plan(format!("duplicate column `{}` in schema", field.name)));
        }
        self.fields.push(field);
        Ok(())
    }

    /// Join output: left columns unchanged, then right columns, each
    /// colliding right name suffixed `__2`, `__3`, ...
    pub fn concat(left: &Schema, right: &Schema) -> (Schema, Vec<String>) {
        let mut fields = left.fields.clone();
        let mut right_names = Vec::with_capacity(right.len());
        for field in &right.fields {
            let mut name = field.name.clone();
            let mut n = 2;
            while fields.iter().any(|f| f.name == name) {
                name = format!("{}__{}", field.name, n);
                n += 1;
            }
            right_names.push(name.clone());
            fields.push(Field {
                name,
                ..field.clone()
            });
        }
        (Schema { fields }, right_names)
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, field) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}:{}", field.name, field.data_type.short_name())?;
            if field.nullable {
                f.write_str("?")?;
            }
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let fields = vec![
            Field::new("a", DataType::Numeric, false),
            Field::new("a", DataType::Boolean, false),
        ];
        assert!(Schema::new(fields).is_err());
    }

    #[test]
    fn concat_suffixes_collisions() {
        let left = Schema::new(vec![
            Field::new("id", DataType::Numeric, false),
            Field::new("x", DataType::Numeric, false),
            Field::new("id__2", DataType::Numeric, false),
        ])
        .unwrap();
        let right = Schema::new(vec![
            Field::new("id", DataType::Numeric, false),
            Field::new("y", DataType::Categorical, true),
        ])
        .unwrap();
        let (joined, names) = Schema::concat(&left, &right);
        assert_eq!(joined.len(), 5);
        assert_eq!(names, vec!["id__3".to_string(), "y".to_string()]);
        assert_eq!(joined.to_string(), "[id:num, x:num, id__2:num, id__3:num, y:cat?]");
    }
}
