//! Stream records and their attribute values.

use std::collections::HashSet;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Maximum number of attribute positions in one tuple.
pub const MAX_ATTRIBUTES: usize = 25;

/// One attribute position of a tuple.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue<T> {
    Numeric(T),
    Categorical(String),
    /// Leaf label first, then strictly broader ancestors up to the hierarchy root.
    CategoricalWithPath(Vec<String>),
}

impl<T: Scalar> AttributeValue<T> {
    pub fn numeric(value: T) -> Result<Self> {
        let v = Self::Numeric(value);
        v.validate()?;
        Ok(v)
    }

    pub fn categorical(label: impl Into<String>) -> Result<Self> {
        let v = Self::Categorical(label.into());
        v.validate()?;
        Ok(v)
    }

    pub fn with_path<S: Into<String>>(path: impl IntoIterator<Item = S>) -> Result<Self> {
        let v = Self::CategoricalWithPath(path.into_iter().map(Into::into).collect());
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Numeric(v) if !v.is_finite() => {
                Err(Error::InvalidTuple(format!("non-finite numeric value {v}")))
            }
            Self::Numeric(_) => Ok(()),
            Self::Categorical(label) => check_label(label),
            Self::CategoricalWithPath(path) => {
                if path.is_empty() {
                    return Err(Error::InvalidTuple("empty hierarchy path".into()));
                }
                let mut seen = HashSet::with_capacity(path.len());
                for label in path {
                    check_label(label)?;
                    if !seen.insert(label.as_str()) {
                        return Err(Error::InvalidTuple(format!(
                            "label `{label}` repeated within hierarchy path"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

}

impl<T> AttributeValue<T> {
    pub fn as_numeric(&self) -> Option<T>
    where
        T: Copy,
    {
        match self {
            Self::Numeric(v) => Some(*v),
            _ => None,
        }
    }

    /// The most specific label of a categorical value.
    pub fn leaf_label(&self) -> Option<&str> {
        match self {
            Self::Numeric(_) => None,
            Self::Categorical(label) => Some(label),
            Self::CategoricalWithPath(path) => path.first().map(String::as_str),
        }
    }

}

impl<T: Scalar> AttributeValue<T> {
    /// Hashable identity used for distinct-value counting.
    pub fn key(&self) -> ValueKey {
        match self {
            // -0.0 and 0.0 are the same value.
            Self::Numeric(v) => ValueKey::Numeric((v.as_f64() + 0.0).to_bits()),
            Self::Categorical(label) => ValueKey::Label(label.clone()),
            Self::CategoricalWithPath(path) => ValueKey::Label(path[0].clone()),
        }
    }
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() {
        Err(Error::InvalidTuple("empty categorical label".into()))
    } else if label == crate::dgh::ROOT_LABEL {
        Err(Error::InvalidTuple(format!(
            "label `{}` is reserved for the hierarchy root",
            crate::dgh::ROOT_LABEL
        )))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKey {
    Numeric(u64),
    Label(String),
}

/// A record as handed to the engine, before it is stamped with its arrival index.
#[derive(Debug, Clone)]
pub struct IncomingTuple<T> {
    pub message_id: String,
    pub subject_key: String,
    pub ingress: Instant,
    pub attributes: Vec<AttributeValue<T>>,
}

impl<T: Scalar> IncomingTuple<T> {
    pub fn new(
        message_id: impl Into<String>,
        subject_key: impl Into<String>,
        attributes: Vec<AttributeValue<T>>,
    ) -> Self {
        Self {
            message_id: message_id.into(),
            subject_key: subject_key.into(),
            ingress: Instant::now(),
            attributes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.len() > MAX_ATTRIBUTES {
            return Err(Error::InvalidTuple(format!(
                "{} attributes exceed the maximum of {MAX_ATTRIBUTES}",
                self.attributes.len()
            )));
        }
        self.attributes.iter().try_for_each(AttributeValue::validate)
    }
}

/// A record accepted by an engine instance.
#[derive(Debug, Clone)]
pub struct DataTuple<T> {
    pub message_id: String,
    pub subject_key: String,
    /// 0-based position in the engine's ingestion order.
    pub arrival_index: u64,
    pub ingress: Instant,
    pub attributes: Vec<AttributeValue<T>>,
}

impl<T> DataTuple<T> {
    pub fn from_incoming(incoming: IncomingTuple<T>, arrival_index: u64) -> Self {
        Self {
            message_id: incoming.message_id,
            subject_key: incoming.subject_key,
            arrival_index,
            ingress: incoming.ingress,
            attributes: incoming.attributes,
        }
    }
}
