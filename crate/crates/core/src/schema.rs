//! Typed database schemas.
//!
//! A schema is a `db_id` plus tables with typed columns, loaded from JSON:
//!
//! ```json
//! {
//!   "db_id": "finance",
//!   "tables": [
//!     { "name": "finance",
//!       "columns": [ { "name": "company", "type": "text" },
//!                    { "name": "revenue", "type": "number" } ],
//!       "keys": [ "company" ] }
//!   ]
//! }
//! ```
//!
//! `keys` is optional and marks columns preferred as join keys. Table and
//! column names are folded to lowercase on load; the loader rejects empty
//! schemas and duplicate names.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column types of the SQL subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Number,
    Text,
    Time,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub col_type: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    /// Columns preferred as join keys; a subset of `columns`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaGraph {
    pub db_id: String,
    pub tables: Vec<Table>,
}

/// A column addressed as `table.column`. Ordering is lexicographic on the
/// rendered form, which the grounder uses to break ties.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualifiedColumn {
    pub table: String,
    pub column: String,
}

impl QualifiedColumn {
    pub fn new(table: &str, column: &str) -> Self {
        QualifiedColumn {
            table: table.to_string(),
            column: column.to_string(),
        }
    }

    /// Parse a `table.column` string.
    pub fn parse(s: &str) -> Option<Self> {
        let (t, c) = s.split_once('.')?;
        if t.is_empty() || c.is_empty() || c.contains('.') {
            return None;
        }
        Some(QualifiedColumn::new(t, c))
    }
}

impl std::fmt::Display for QualifiedColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

// On the wire a qualified column is its `table.column` string.
impl Serialize for QualifiedColumn {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QualifiedColumn {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        QualifiedColumn::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("not a table.column reference: `{s}`")))
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read schema: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid schema JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema `{db_id}` has no tables")]
    Empty { db_id: String },
    #[error("table `{table}` has no columns")]
    EmptyTable { table: String },
    #[error("duplicate table name `{table}`")]
    DuplicateTable { table: String },
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("key `{key}` of table `{table}` is not one of its columns")]
    UnknownKey { table: String, key: String },
}

impl SchemaGraph {
    pub fn from_json(json: &str) -> Result<Self, SchemaError> {
        let mut schema: SchemaGraph = serde_json::from_str(json)?;
        schema.fold_case();
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn fold_case(&mut self) {
        self.db_id = self.db_id.trim().to_lowercase();
        for t in &mut self.tables {
            t.name = t.name.trim().to_lowercase();
            for c in &mut t.columns {
                c.name = c.name.trim().to_lowercase();
            }
            for k in &mut t.keys {
                *k = k.trim().to_lowercase();
            }
        }
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.tables.is_empty() {
            return Err(SchemaError::Empty {
                db_id: self.db_id.clone(),
            });
        }
        let mut table_names = BTreeSet::new();
        for t in &self.tables {
            if !table_names.insert(t.name.clone()) {
                return Err(SchemaError::DuplicateTable {
                    table: t.name.clone(),
                });
            }
            if t.columns.is_empty() {
                return Err(SchemaError::EmptyTable {
                    table: t.name.clone(),
                });
            }
            let mut col_names = BTreeSet::new();
            for c in &t.columns {
                if !col_names.insert(c.name.clone()) {
                    return Err(SchemaError::DuplicateColumn {
                        table: t.name.clone(),
                        column: c.name.clone(),
                    });
                }
            }
            for k in &t.keys {
                if !col_names.contains(k) {
                    return Err(SchemaError::UnknownKey {
                        table: t.name.clone(),
                        key: k.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// All columns in declaration order (table order, then column order).
    pub fn qualified_columns(&self) -> Vec<QualifiedColumn> {
        self.tables
            .iter()
            .flat_map(|t| {
                t.columns
                    .iter()
                    .map(|c| QualifiedColumn::new(&t.name, &c.name))
            })
            .collect()
    }

    pub fn column_type(&self, col: &QualifiedColumn) -> Option<ColumnType> {
        self.table(&col.table)?
            .columns
            .iter()
            .find(|c| c.name == col.column)
            .map(|c| c.col_type)
    }

    pub fn has_column(&self, col: &QualifiedColumn) -> bool {
        self.column_type(col).is_some()
    }

    /// The first text-typed column in declaration order — the conventional
    /// target for entity equality filters.
    pub fn first_text_column(&self) -> Option<QualifiedColumn> {
        self.tables.iter().find_map(|t| {
            t.columns
                .iter()
                .find(|c| c.col_type == ColumnType::Text)
                .map(|c| QualifiedColumn::new(&t.name, &c.name))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finance_json() -> &'static str {
        r#"{
            "db_id": "Finance",
            "tables": [
                {
                    "name": "Finance",
                    "columns": [
                        {"name": "Company", "type": "text"},
                        {"name": "Revenue", "type": "number"}
                    ],
                    "keys": ["company"]
                }
            ]
        }"#
    }

    #[test]
    fn loads_and_folds_case() {
        let s = SchemaGraph::from_json(finance_json()).unwrap();
        assert_eq!(s.db_id, "finance");
        assert_eq!(s.tables[0].name, "finance");
        assert_eq!(
            s.qualified_columns(),
            vec![
                QualifiedColumn::new("finance", "company"),
                QualifiedColumn::new("finance", "revenue")
            ]
        );
        assert_eq!(
            s.first_text_column(),
            Some(QualifiedColumn::new("finance", "company"))
        );
        assert_eq!(
            s.column_type(&QualifiedColumn::new("finance", "revenue")),
            Some(ColumnType::Number)
        );
    }

    #[test]
    fn rejects_structural_problems() {
        let empty = r#"{"db_id": "x", "tables": []}"#;
        assert!(matches!(
            SchemaGraph::from_json(empty),
            Err(SchemaError::Empty { .. })
        ));

        let dup_table = r#"{"db_id": "x", "tables": [
            {"name": "t", "columns": [{"name": "a", "type": "number"}]},
            {"name": "T", "columns": [{"name": "a", "type": "number"}]}
        ]}"#;
        assert!(matches!(
            SchemaGraph::from_json(dup_table),
            Err(SchemaError::DuplicateTable { .. })
        ));

        let dup_col = r#"{"db_id": "x", "tables": [
            {"name": "t", "columns": [
                {"name": "a", "type": "number"}, {"name": "A", "type": "text"}
            ]}
        ]}"#;
        assert!(matches!(
            SchemaGraph::from_json(dup_col),
            Err(SchemaError::DuplicateColumn { .. })
        ));

        let bad_key = r#"{"db_id": "x", "tables": [
            {"name": "t", "columns": [{"name": "a", "type": "number"}], "keys": ["b"]}
        ]}"#;
        assert!(matches!(
            SchemaGraph::from_json(bad_key),
            Err(SchemaError::UnknownKey { .. })
        ));

        let no_cols = r#"{"db_id": "x", "tables": [{"name": "t", "columns": []}]}"#;
        assert!(matches!(
            SchemaGraph::from_json(no_cols),
            Err(SchemaError::EmptyTable { .. })
        ));
    }

    #[test]
    fn qualified_column_round_trips() {
        let c = QualifiedColumn::parse("finance.revenue").unwrap();
        assert_eq!(c.to_string(), "finance.revenue");
        assert!(QualifiedColumn::parse("no_dot").is_none());
        assert!(QualifiedColumn::parse("a.b.c").is_none());
    }
}
