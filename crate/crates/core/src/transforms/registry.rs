use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::{Compose, RotX, RotY, RotZ, Shear, Taper, Transform, Twist};

type Factory = Box<dyn Fn() -> Arc<dyn Transform> + Send + Sync>;

/// Named transformation constructors.
pub struct TransformRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for TransformRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl TransformRegistry {
    pub fn empty() -> Self {
        TransformRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Registry with every built-in transformation.
    ///
    /// `rotzx` rotates about z, then x; `rotzyx` rotates about z, then y,
    /// then x. Their parameters are ordered the same way.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("rotx", || Arc::new(RotX));
        r.register("roty", || Arc::new(RotY));
        r.register("rotz", || Arc::new(RotZ));
        r.register("shear", || Arc::new(Shear));
        r.register("twist", || Arc::new(Twist));
        r.register("taper", || Arc::new(Taper));
        r.register("rotzx", || {
            Arc::new(Compose::named("rotzx", vec![Arc::new(RotZ), Arc::new(RotX)]).expect("non-empty"))
        });
        r.register("rotzyx", || {
            Arc::new(
                Compose::named("rotzyx", vec![Arc::new(RotZ), Arc::new(RotY), Arc::new(RotX)])
                    .expect("non-empty"),
            )
        });
        r
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn() -> Arc<dyn Transform> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Transform>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownTransform(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Parses `a*b*...`; the rightmost factor is applied first.
    pub fn parse(&self, expr: &str) -> Result<Arc<dyn Transform>> {
        let factors: Vec<&str> = expr.split('*').map(str::trim).collect();
        if factors.iter().any(|f| f.is_empty()) {
            return Err(Error::UnknownTransform(expr.to_string()));
        }
        if factors.len() == 1 {
            return self.get(&factors[0].to_ascii_lowercase());
        }
        let parts = factors
            .iter()
            .rev()
            .map(|f| self.get(&f.to_ascii_lowercase()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(Compose::new(parts)?))
    }
}

/// Parses a transformation expression against the built-in registry.
pub fn parse_transform(expr: &str) -> Result<Arc<dyn Transform>> {
    TransformRegistry::with_builtins().parse(expr)
}
