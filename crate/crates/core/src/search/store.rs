use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::gnn::{LayerParams, ShareKey};
use crate::scalar::Scalar;
use crate::space::{AggregationKind, AttentionKind};

/// Layer parameters shared between child models, keyed by layer signature.
#[derive(Clone, Debug, Default)]
pub struct SharedParamStore<T> {
    entries: BTreeMap<ShareKey, LayerParams<T>>,
    hits: Cell<u64>,
    misses: Cell<u64>,
    merges: u64,
}

impl<T: Scalar> SharedParamStore<T> {
    pub fn new() -> Self {
        SharedParamStore { entries: BTreeMap::new(), hits: Cell::new(0), misses: Cell::new(0), merges: 0 }
    }

    /// Deep copy of the stored parameters, or fresh Glorot weights on a miss.
    /// Only the hit/miss counters change.
    pub fn fetch_copy<R: Rng + ?Sized>(&self, key: ShareKey, rng: &mut R) -> LayerParams<T> {
        match self.entries.get(&key) {
            Some(p) => {
                self.hits.set(self.hits.get() + 1);
                p.clone()
            }
            None => {
                self.misses.set(self.misses.get() + 1);
                LayerParams::init(key, rng)
            }
        }
    }

    /// Stores `params` under its key when `shaped_reward > 0`. Returns
    /// whether the store changed.
    pub fn merge_if_positive(&mut self, params: &LayerParams<T>, shaped_reward: f64) -> Result<bool> {
        params.check_shapes()?;
        if shaped_reward > 0.0 {
            self.entries.insert(params.key, params.clone());
            self.merges += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn get(&self, key: &ShareKey) -> Option<&LayerParams<T>> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &ShareKey> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits.get()
    }

    pub fn misses(&self) -> u64 {
        self.misses.get()
    }

    pub fn merges(&self) -> u64 {
        self.merges
    }

    /// Text dump in key order:
    ///
    /// ```text
    /// graphnas-store 1
    /// entry <layer> <attention> <aggregation> <in_dim> <heads> <hidden> <res_rows|-> <res_cols|->
    /// <one line of values per tensor, in LayerParams::tensors order>
    /// end
    /// ```
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("graphnas-store 1\n");
        for (k, p) in &self.entries {
            let (rr, rc) = k.residual.map_or(("-".to_string(), "-".to_string()), |(a, b)| (a.to_string(), b.to_string()));
            writeln!(
                out,
                "entry {} {} {} {} {} {} {rr} {rc}",
                k.layer_index,
                k.attention.name(),
                k.aggregation.name(),
                k.in_dim,
                k.heads,
                k.hidden
            )
            .expect("write to string");
            for t in p.tensors() {
                let vals: Vec<String> = t.data().iter().map(|v| v.as_f64().to_string()).collect();
                out.push_str(&vals.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("graphnas-store 1") {
            return Err(bad("missing `graphnas-store 1` header".into()));
        }
        let mut store = SharedParamStore::new();
        loop {
            let line = lines.next().ok_or_else(|| bad("missing `end` marker".into()))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks == ["end"] {
                break;
            }
            if toks.len() != 9 || toks[0] != "entry" {
                return Err(bad(format!("expected an `entry` line, found `{line}`")));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number `{s}` in `{line}`")));
            let attention = AttentionKind::ALL
                .into_iter()
                .find(|a| a.name() == toks[2])
                .ok_or_else(|| bad(format!("unknown attention `{}`", toks[2])))?;
            let aggregation = AggregationKind::ALL
                .into_iter()
                .find(|a| a.name() == toks[3])
                .ok_or_else(|| bad(format!("unknown aggregation `{}`", toks[3])))?;
            let residual = match (toks[7], toks[8]) {
                ("-", "-") => None,
                (a, b) => Some((num(a)?, num(b)?)),
            };
            let key = ShareKey {
                layer_index: num(toks[1])?,
                attention,
                aggregation,
                in_dim: num(toks[4])?,
                heads: num(toks[5])?,
                hidden: num(toks[6])?,
                residual,
            };
            let mut params = LayerParams::<T>::init(key, &mut crate::rng::seeded(0));
            for t in params.tensors_mut() {
                let vals: Vec<T> = lines
                    .next()
                    .unwrap_or("")
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map(T::lit).map_err(|_| bad(format!("bad value `{v}`"))))
                    .collect::<Result<_>>()?;
                if vals.len() != t.numel() {
                    return Err(bad(format!("{:?}: {} values for {} entries", key, vals.len(), t.numel())));
                }
                *t = Tensor::new(t.shape().to_vec(), vals)?;
            }
            store.entries.insert(key, params);
        }
        Ok(store)
    }
}
