//! The architecture action space: option lists per slot, the token
//! encoding of architectures, uniform sampling and enumeration.

mod tokens;

pub use tokens::{decode, encode, encode_compact};

use std::fmt;

use rand::Rng;

pub use crate::autodiff::ActivationKind;
use crate::error::{Error, Result};

/// Neighbor sampling method. Only full first-order neighborhoods exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplingKind {
    FirstOrder,
}

impl SamplingKind {
    pub const ALL: [SamplingKind; 1] = [SamplingKind::FirstOrder];

    pub fn name(self) -> &'static str {
        "first-order"
    }
}

/// Correlation (attention) function producing the pre-normalization score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttentionKind {
    Const,
    Gcn,
    Gat,
    SymGat,
    Cos,
    Linear,
    GeneLinear,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 7] = [
        AttentionKind::Const,
        AttentionKind::Gcn,
        AttentionKind::Gat,
        AttentionKind::SymGat,
        AttentionKind::Cos,
        AttentionKind::Linear,
        AttentionKind::GeneLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttentionKind::Const => "const",
            AttentionKind::Gcn => "gcn",
            AttentionKind::Gat => "gat",
            AttentionKind::SymGat => "sym-gat",
            AttentionKind::Cos => "cos",
            AttentionKind::Linear => "linear",
            AttentionKind::GeneLinear => "gene-linear",
        }
    }

    /// Whether the score depends on learned parameters.
    pub fn is_parameterized(self) -> bool {
        !matches!(self, AttentionKind::Const | AttentionKind::Gcn)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggregationKind {
    Sum,
    MeanPooling,
    MaxPooling,
    Mlp,
}

impl AggregationKind {
    pub const ALL: [AggregationKind; 4] = [
        AggregationKind::Sum,
        AggregationKind::MeanPooling,
        AggregationKind::MaxPooling,
        AggregationKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationKind::Sum => "sum",
            AggregationKind::MeanPooling => "mean-pooling",
            AggregationKind::MaxPooling => "max-pooling",
            AggregationKind::Mlp => "mlp",
        }
    }
}

/// How a skip connection joins the layer output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MergeKind {
    Concat,
    Add,
}

impl MergeKind {
    pub const ALL: [MergeKind; 2] = [MergeKind::Concat, MergeKind::Add];

    pub fn name(self) -> &'static str {
        match self {
            MergeKind::Concat => "concat",
            MergeKind::Add => "add",
        }
    }
}

pub const HEAD_OPTIONS: [usize; 6] = [1, 2, 4, 6, 8, 16];
pub const HIDDEN_OPTIONS: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];

/// Residual source of a layer: `from == 0` is the raw input features,
/// `from == k` the output of layer `k` (layers count from 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SkipSpec {
    pub from: usize,
    pub merge: MergeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerSpec {
    pub sampling: SamplingKind,
    pub attention: AttentionKind,
    pub aggregation: AggregationKind,
    pub activation: ActivationKind,
    pub heads: usize,
    pub hidden: usize,
    pub skip: Option<SkipSpec>,
}

impl LayerSpec {
    pub fn new(attention: AttentionKind, aggregation: AggregationKind, activation: ActivationKind, heads: usize, hidden: usize) -> Self {
        LayerSpec {
            sampling: SamplingKind::FirstOrder,
            attention,
            aggregation,
            activation,
            heads,
            hidden,
            skip: None,
        }
    }
}

/// A child architecture: one spec per layer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArchDescription {
    pub layers: Vec<LayerSpec>,
}

impl ArchDescription {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        ArchDescription { layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Structural checks independent of any particular space.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::validation("layers", "architecture has no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let layer = i + 1;
            if !HEAD_OPTIONS.contains(&l.heads) {
                return Err(Error::validation(format!("layer {layer} heads"), format!("{} not in {HEAD_OPTIONS:?}", l.heads)));
            }
            if !HIDDEN_OPTIONS.contains(&l.hidden) {
                return Err(Error::validation(
                    format!("layer {layer} hidden"),
                    format!("{} not in {HIDDEN_OPTIONS:?}", l.hidden),
                ));
            }
            if let Some(skip) = l.skip {
                if skip.from >= layer {
                    return Err(Error::validation(
                        format!("layer {layer} skip_from"),
                        format!("source {} must be below layer {layer}", skip.from),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ArchDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&encode_compact(self))
    }
}

/// Which decision a controller step makes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Sampling,
    Attention,
    Aggregation,
    Activation,
    Heads,
    Hidden,
    SkipFrom,
    Merge,
}

impl SlotKind {
    pub fn name(self) -> &'static str {
        match self {
            SlotKind::Sampling => "sampling",
            SlotKind::Attention => "attention",
            SlotKind::Aggregation => "aggregation",
            SlotKind::Activation => "activation",
            SlotKind::Heads => "heads",
            SlotKind::Hidden => "hidden",
            SlotKind::SkipFrom => "skip_from",
            SlotKind::Merge => "merge",
        }
    }
}

/// One controller step: layer (counting from 1), decision kind and option count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub layer: usize,
    pub kind: SlotKind,
    pub options: usize,
}

impl Slot {
    pub fn label(&self) -> String {
        format!("layer {} {}", self.layer, self.kind.name())
    }
}

/// Option lists for every slot. List order defines controller logit indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    pub sampling: Vec<SamplingKind>,
    pub attention: Vec<AttentionKind>,
    pub aggregation: Vec<AggregationKind>,
    pub activation: Vec<ActivationKind>,
    pub heads: Vec<usize>,
    pub hidden: Vec<usize>,
    pub merge: Vec<MergeKind>,
    pub skip_enabled: bool,
    pub layer_count: usize,
}

impl ActionSpace {
    /// The full search space with every listed option.
    pub fn full(layer_count: usize, skip_enabled: bool) -> Self {
        ActionSpace {
            sampling: SamplingKind::ALL.to_vec(),
            attention: AttentionKind::ALL.to_vec(),
            aggregation: AggregationKind::ALL.to_vec(),
            activation: ActivationKind::ALL.to_vec(),
            heads: HEAD_OPTIONS.to_vec(),
            hidden: HIDDEN_OPTIONS.to_vec(),
            merge: MergeKind::ALL.to_vec(),
            skip_enabled,
            layer_count,
        }
    }

    /// Checks option lists are non-empty, duplicate-free and drawn from the
    /// global lists.
    pub fn check(&self) -> Result<()> {
        fn list<T: PartialEq + fmt::Debug>(name: &str, xs: &[T], allowed: &[T]) -> Result<()> {
            if xs.is_empty() {
                return Err(Error::validation(name, "empty option list"));
            }
            for (i, x) in xs.iter().enumerate() {
                if !allowed.contains(x) {
                    return Err(Error::validation(name, format!("{x:?} is not a known option")));
                }
                if xs[..i].contains(x) {
                    return Err(Error::validation(name, format!("{x:?} listed twice")));
                }
            }
            Ok(())
        }
        if self.layer_count == 0 {
            return Err(Error::validation("layer_count", "must be at least 1"));
        }
        list("sampling", &self.sampling, &SamplingKind::ALL)?;
        list("attention", &self.attention, &AttentionKind::ALL)?;
        list("aggregation", &self.aggregation, &AggregationKind::ALL)?;
        list("activation", &self.activation, &ActivationKind::ALL)?;
        list("heads", &self.heads, &HEAD_OPTIONS)?;
        list("hidden", &self.hidden, &HIDDEN_OPTIONS)?;
        if self.skip_enabled {
            list("merge", &self.merge, &MergeKind::ALL)?;
        }
        Ok(())
    }

    /// Controller steps in emission order.
    pub fn slots(&self) -> Vec<Slot> {
        let mut slots = Vec::new();
        for layer in 1..=self.layer_count {
            let mut push = |kind, options| slots.push(Slot { layer, kind, options });
            push(SlotKind::Sampling, self.sampling.len());
            push(SlotKind::Attention, self.attention.len());
            push(SlotKind::Aggregation, self.aggregation.len());
            push(SlotKind::Activation, self.activation.len());
            push(SlotKind::Heads, self.heads.len());
            push(SlotKind::Hidden, self.hidden.len());
            if self.skip_enabled {
                push(SlotKind::SkipFrom, layer);
                push(SlotKind::Merge, self.merge.len());
            }
        }
        slots
    }

    /// Number of distinct architectures, `None` on overflow.
    pub fn size(&self) -> Option<u128> {
        self.slots().iter().try_fold(1u128, |acc, s| acc.checked_mul(s.options as u128))
    }

    /// Per-slot option indices of `arch`.
    pub fn to_indices(&self, arch: &ArchDescription) -> Result<Vec<usize>> {
        if arch.depth() != self.layer_count {
            return Err(Error::validation(
                "layers",
                format!("{} layers, space has {}", arch.depth(), self.layer_count),
            ));
        }
        fn find<T: PartialEq + fmt::Debug>(xs: &[T], x: &T, slot: String) -> Result<usize> {
            xs.iter()
                .position(|y| y == x)
                .ok_or_else(|| Error::validation(slot, format!("{x:?} not offered by this space")))
        }
        let mut out = Vec::new();
        for (i, l) in arch.layers.iter().enumerate() {
            let layer = i + 1;
            let slot = |k: SlotKind| format!("layer {layer} {}", k.name());
            out.push(find(&self.sampling, &l.sampling, slot(SlotKind::Sampling))?);
            out.push(find(&self.attention, &l.attention, slot(SlotKind::Attention))?);
            out.push(find(&self.aggregation, &l.aggregation, slot(SlotKind::Aggregation))?);
            out.push(find(&self.activation, &l.activation, slot(SlotKind::Activation))?);
            out.push(find(&self.heads, &l.heads, slot(SlotKind::Heads))?);
            out.push(find(&self.hidden, &l.hidden, slot(SlotKind::Hidden))?);
            match (self.skip_enabled, l.skip) {
                (true, Some(skip)) => {
                    if skip.from >= layer {
                        return Err(Error::validation(slot(SlotKind::SkipFrom), format!("source {} must be below layer {layer}", skip.from)));
                    }
                    out.push(skip.from);
                    out.push(find(&self.merge, &skip.merge, slot(SlotKind::Merge))?);
                }
                (false, None) => {}
                (true, None) => return Err(Error::validation(slot(SlotKind::SkipFrom), "missing skip connection")),
                (false, Some(_)) => return Err(Error::validation(slot(SlotKind::SkipFrom), "skip connections disabled in this space")),
            }
        }
        Ok(out)
    }

    /// Inverse of [`ActionSpace::to_indices`].
    pub fn from_indices(&self, indices: &[usize]) -> Result<ArchDescription> {
        let slots = self.slots();
        if indices.len() != slots.len() {
            return Err(Error::validation("tokens", format!("{} tokens for {} slots", indices.len(), slots.len())));
        }
        for (s, &i) in slots.iter().zip(indices) {
            if i >= s.options {
                return Err(Error::validation(s.label(), format!("index {i} outside {} options", s.options)));
            }
        }
        let per = slots.len() / self.layer_count;
        let layers = indices
            .chunks(per)
            .map(|c| LayerSpec {
                sampling: self.sampling[c[0]],
                attention: self.attention[c[1]],
                aggregation: self.aggregation[c[2]],
                activation: self.activation[c[3]],
                heads: self.heads[c[4]],
                hidden: self.hidden[c[5]],
                skip: self.skip_enabled.then(|| SkipSpec { from: c[6], merge: self.merge[c[7]] }),
            })
            .collect();
        Ok(ArchDescription { layers })
    }

    pub fn contains(&self, arch: &ArchDescription) -> bool {
        self.to_indices(arch).is_ok()
    }

    /// Uniform draw over all architectures in the space.
    pub fn random_arch<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchDescription {
        let idx: Vec<usize> = self.slots().iter().map(|s| rng.gen_range(0..s.options)).collect();
        self.from_indices(&idx).expect("sampled indices are in range")
    }

    /// Every architecture exactly once, in mixed-radix order with the last
    /// slot varying fastest. Refuses spaces larger than `cap`.
    pub fn enumerate(&self, cap: u128) -> Result<Enumerate<'_>> {
        match self.size() {
            Some(n) if n <= cap => Ok(Enumerate { space: self, radices: self.slots().iter().map(|s| s.options).collect(), next: Some(vec![0; self.slots().len()]) }),
            size => Err(Error::Parameter(format!(
                "space holds {} architectures, above the enumeration cap {cap}",
                size.map_or_else(|| "more than 2^128".to_string(), |n| n.to_string())
            ))),
        }
    }
}

pub struct Enumerate<'a> {
    space: &'a ActionSpace,
    radices: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for Enumerate<'_> {
    type Item = ArchDescription;

    fn next(&mut self) -> Option<ArchDescription> {
        let current = self.next.take()?;
        let arch = self.space.from_indices(&current).expect("counter in range");
        let mut succ = current;
        let mut k = succ.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            succ[k] += 1;
            if succ[k] < self.radices[k] {
                self.next = Some(succ);
                break;
            }
            succ[k] = 0;
        }
        Some(arch)
    }
}
