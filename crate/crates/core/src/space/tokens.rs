//! Text form of an architecture. One layer per line (or per `;` segment),
//! comma-separated tokens in slot order:
//! `sampling,attention,aggregation,activation,heads,hidden[,skip_from,merge]`.

use super::{
    ActivationKind, AggregationKind, ArchDescription, AttentionKind, LayerSpec, MergeKind, SamplingKind, SkipSpec,
};
use crate::error::{Error, Result};

fn layer_tokens(l: &LayerSpec) -> String {
    let mut s = format!(
        "{},{},{},{},{},{}",
        l.sampling.name(),
        l.attention.name(),
        l.aggregation.name(),
        l.activation.name(),
        l.heads,
        l.hidden
    );
    if let Some(skip) = l.skip {
        s.push_str(&format!(",{},{}", skip.from, skip.merge.name()));
    }
    s
}

/// Multi-line encoding, one layer per line.
pub fn encode(arch: &ArchDescription) -> String {
    arch.layers.iter().map(layer_tokens).collect::<Vec<_>>().join("\n")
}

/// Single-line encoding with layers joined by `;`.
pub fn encode_compact(arch: &ArchDescription) -> String {
    arch.layers.iter().map(layer_tokens).collect::<Vec<_>>().join(";")
}

fn named<T: Copy>(all: &[T], name: impl Fn(T) -> &'static str, tok: &str, slot: String) -> Result<T> {
    all.iter().copied().find(|&k| name(k) == tok).ok_or_else(|| {
        let known: Vec<_> = all.iter().map(|&k| name(k)).collect();
        Error::validation(slot, format!("unknown option `{tok}`, expected one of {}", known.join("|")))
    })
}

fn number(tok: &str, slot: String) -> Result<usize> {
    tok.parse().map_err(|_| Error::validation(slot, format!("expected an integer, found `{tok}`")))
}

/// Parses the text form and runs the structural checks of
/// [`ArchDescription::validate`].
pub fn decode(text: &str) -> Result<ArchDescription> {
    let mut layers = Vec::new();
    for seg in text.split(['\n', ';']).map(str::trim).filter(|s| !s.is_empty()) {
        let layer = layers.len() + 1;
        let slot = |name: &str| format!("layer {layer} {name}");
        let toks: Vec<&str> = seg.split(',').map(str::trim).collect();
        if toks.len() != 6 && toks.len() != 8 {
            return Err(Error::validation(
                format!("layer {layer}"),
                format!("expected 6 or 8 tokens, found {}", toks.len()),
            ));
        }
        let skip = if toks.len() == 8 {
            Some(SkipSpec {
                from: number(toks[6], slot("skip_from"))?,
                merge: named(&MergeKind::ALL, MergeKind::name, toks[7], slot("merge"))?,
            })
        } else {
            None
        };
        layers.push(LayerSpec {
            sampling: named(&SamplingKind::ALL, SamplingKind::name, toks[0], slot("sampling"))?,
            attention: named(&AttentionKind::ALL, AttentionKind::name, toks[1], slot("attention"))?,
            aggregation: named(&AggregationKind::ALL, AggregationKind::name, toks[2], slot("aggregation"))?,
            activation: named(&ActivationKind::ALL, ActivationKind::name, toks[3], slot("activation"))?,
            heads: number(toks[4], slot("heads"))?,
            hidden: number(toks[5], slot("hidden"))?,
            skip,
        });
    }
    let arch = ArchDescription { layers };
    arch.validate()?;
    Ok(arch)
}
