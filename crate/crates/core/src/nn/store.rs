//! Parameter storage and the logical-name registry.
//!
//! Parameters live in one flat store; model components hold [`ParamId`]s into
//! it. Weight sharing between components is nothing more than two logical
//! paths resolving to the same id, which the [`ParameterRegistry`] records as
//! an alias table. Storage identity (not value equality) is what makes a
//! gradient step through one path visible through the other.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;

use crate::util::hash_f64s;

/// Index of a parameter tensor in a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    /// Canonical name: the path under which the tensor was created.
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

/// Flat storage for every trainable tensor of a model.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: Vec<Param>,
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore::default()
    }

    /// Registers a new tensor under a canonical name. Names must be unique;
    /// a collision is a wiring bug in the model builder.
    pub fn add(&mut self, name: &str, value: Array2<f64>) -> ParamId {
        assert!(
            self.id_by_name(name).is_none(),
            "duplicate canonical parameter name {name:?}"
        );
        let grad = Array2::zeros(value.raw_dim());
        self.params.push(Param { name: name.to_string(), value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, id: ParamId, contribution: &Array2<f64>) {
        self.params[id.0].grad += contribution;
    }

    /// Total number of scalar parameters in canonical storage. Shared
    /// tensors count once, which is the point.
    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Hash of all parameter values in creation order; bitwise equality
    /// check for determinism and freeze tests.
    pub fn value_hash(&self) -> String {
        hash_f64s(self.params.iter().flat_map(|p| p.value.iter()))
    }

    /// Hash of a single tensor's values.
    pub fn tensor_hash(&self, id: ParamId) -> String {
        hash_f64s(self.params[id.0].value.iter())
    }
}

/// Maps every logical parameter path of a model to its canonical storage.
/// Multiple logical paths aliasing one id encode weight sharing.
#[derive(Debug, Clone, Default)]
pub struct ParameterRegistry {
    entries: BTreeMap<String, ParamId>,
}

impl ParameterRegistry {
    pub fn new() -> Self {
        ParameterRegistry::default()
    }

    pub fn record(&mut self, logical: &str, id: ParamId) {
        let prev = self.entries.insert(logical.to_string(), id);
        assert!(prev.is_none(), "logical parameter path {logical:?} recorded twice");
    }

    pub fn resolve(&self, logical: &str) -> Option<ParamId> {
        self.entries.get(logical).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn logical_paths(&self) -> impl Iterator<Item = (&str, ParamId)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Groups logical paths by the canonical tensor they resolve to. The
    /// result is deterministic (sorted by canonical name).
    pub fn alias_groups(&self, store: &ParameterStore) -> BTreeMap<String, Vec<String>> {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (logical, id) in &self.entries {
            groups.entry(store.name(*id).to_string()).or_default().push(logical.clone());
        }
        groups
    }

    /// All logical paths that share storage with the given path (including
    /// itself).
    pub fn aliases_of(&self, logical: &str) -> Vec<&str> {
        match self.resolve(logical) {
            None => Vec::new(),
            Some(id) => self
                .entries
                .iter()
                .filter(|(_, v)| **v == id)
                .map(|(k, _)| k.as_str())
                .collect(),
        }
    }
}

/// Uniform fan-in initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn uniform_init<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn aliases_share_storage() {
        let mut store = ParameterStore::new();
        let w = store.add("shared.enc.w", arr2(&[[1.0, 2.0]]));
        let b = store.add("dec.b", arr2(&[[0.0]]));
        let mut reg = ParameterRegistry::new();
        reg.record("l1.enc.w", w);
        reg.record("l2.enc.w", w);
        reg.record("dec.b", b);
        assert_eq!(reg.resolve("l1.enc.w"), reg.resolve("l2.enc.w"));
        let groups = reg.alias_groups(&store);
        assert_eq!(groups["shared.enc.w"], vec!["l1.enc.w".to_string(), "l2.enc.w".to_string()]);
        assert_eq!(reg.aliases_of("l1.enc.w"), vec!["l1.enc.w", "l2.enc.w"]);
        // A write through canonical storage is visible from every alias.
        store.value_mut(w)[[0, 0]] = 9.0;
        let via_l2 = reg.resolve("l2.enc.w").unwrap();
        assert_eq!(store.value(via_l2)[[0, 0]], 9.0);
    }

    #[test]
    #[should_panic(expected = "duplicate canonical parameter name")]
    fn duplicate_canonical_names_panic() {
        let mut store = ParameterStore::new();
        store.add("w", arr2(&[[1.0]]));
        store.add("w", arr2(&[[2.0]]));
    }

    #[test]
    fn grad_accumulation_and_reset() {
        let mut store = ParameterStore::new();
        let w = store.add("w", arr2(&[[1.0, 1.0]]));
        store.accumulate_grad(w, &arr2(&[[0.5, 1.0]]));
        store.accumulate_grad(w, &arr2(&[[0.5, 1.0]]));
        assert_eq!(store.grad(w), &arr2(&[[1.0, 2.0]]));
        store.zero_grads();
        assert_eq!(store.grad(w), &arr2(&[[0.0, 0.0]]));
    }

    #[test]
    fn element_counts_ignore_aliases() {
        let mut store = ParameterStore::new();
        store.add("a", Array2::zeros((3, 4)));
        store.add("b", Array2::zeros((2, 2)));
        assert_eq!(store.total_elements(), 16);
    }

    #[test]
    fn uniform_init_respects_bound() {
        let mut rng = rand::rngs::mock::StepRng::new(0, 12345);
        let m = uniform_init(&mut rng, 4, 4, 16);
        for v in m.iter() {
            assert!(v.abs() <= 0.25);
        }
    }
}
