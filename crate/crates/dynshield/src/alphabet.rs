//! Interned symbol alphabets.
//!
//! Every machine in this crate ranges over small finite alphabets of named
//! symbols. Symbols are interned to `u16` indices so the hot paths (learning,
//! game solving, training) never touch strings. Alphabets built from name
//! lists are canonicalized to shortlex order (length, then bytes), which makes
//! index order the tie-breaking order used everywhere else.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::{Error, Result};

/// Index of a symbol within its [`Alphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sym(pub u16);

impl Sym {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Shortlex comparison of two symbol names: shorter first, ties by bytes.
pub fn shortlex_cmp(a: &str, b: &str) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// A fixed, duplicate-free list of named symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
    lookup: HashMap<String, Sym>,
}

impl Alphabet {
    /// Builds an alphabet from names, canonicalizing to shortlex order.
    /// Fails on an empty list or duplicate names.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Invalid("alphabet must be non-empty".into()));
        }
        names.sort_by(|a, b| shortlex_cmp(a, b));
        for w in names.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Invalid(format!("duplicate symbol '{}'", w[0])));
            }
        }
        Ok(Self::from_ordered(names))
    }

    /// Builds an alphabet whose symbol order is exactly the given order.
    /// Used for product alphabets, where the order is the pair order of the
    /// component alphabets rather than name shortlex.
    fn from_ordered(names: Vec<String>) -> Self {
        let lookup = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), Sym(i as u16)))
            .collect();
        Alphabet { names, lookup }
    }

    /// The product alphabet of Cont x Env action pairs. The pair (c, e) gets
    /// index `c * |env| + e` and the display name `"c,e"`.
    pub fn product(cont: &Alphabet, env: &Alphabet) -> Self {
        let mut names = Vec::with_capacity(cont.len() * env.len());
        for c in cont.names() {
            for e in env.names() {
                names.push(format!("{c},{e}"));
            }
        }
        Self::from_ordered(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, s: Sym) -> &str {
        &self.names[s.index()]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    pub fn get(&self, name: &str) -> Option<Sym> {
        self.lookup.get(name).copied()
    }

    /// Like [`get`](Self::get) but reports the offending name.
    pub fn require(&self, name: &str) -> Result<Sym> {
        self.get(name)
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    pub fn syms(&self) -> impl Iterator<Item = Sym> {
        (0..self.names.len() as u16).map(Sym)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortlex_canonical_order() {
        let a = Alphabet::new(["north", "east", "west", "south"]).unwrap();
        let order: Vec<&str> = a.names().collect();
        assert_eq!(order, ["east", "west", "north", "south"]);
        assert_eq!(a.get("east"), Some(Sym(0)));
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(Alphabet::new(["a", "a"]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn product_order_is_pair_order() {
        let c = Alphabet::new(["open", "close"]).unwrap();
        let e = Alphabet::new(["x", "y"]).unwrap();
        let p = Alphabet::product(&c, &e);
        // "open" sorts before "close" in shortlex, so pairs lead with open.
        let names: Vec<&str> = p.names().collect();
        assert_eq!(names, ["open,x", "open,y", "close,x", "close,y"]);
    }
}
