// SPDX-License-Identifier: Apache-2.0

//! Layer-graph representation and the built-in workload generators.
//!
//! Every layer is lowered to a single GEMM `(m x k) * (k x n)`. Graphs are
//! linear chains: layer `i` feeds layer `i + 1`. Consecutive shapes are not
//! required to agree, since lowering drops reshape/transposition semantics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmShape {
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub elem_bytes: u64,
}

impl GemmShape {
    pub fn new(m: u64, k: u64, n: u64, elem_bytes: u64) -> Self {
        Self {
            m,
            k,
            n,
            elem_bytes,
        }
    }

    pub fn macs(&self) -> u64 {
        self.m * self.k * self.n
    }

    /// Bytes of the output tensor.
    pub fn output_bytes(&self) -> u64 {
        self.m * self.n * self.elem_bytes
    }

    fn is_valid(&self) -> bool {
        self.m >= 1 && self.k >= 1 && self.n >= 1 && self.elem_bytes >= 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Gemm,
    ConvLowered,
    AttentionMatmul,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub id: usize,
    pub name: String,
    pub shape: GemmShape,
    pub kind: LayerKind,
}

/// An ordered chain of GEMM-lowered layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "WorkloadFile", try_from = "WorkloadFile")]
pub struct ModelGraph {
    pub name: String,
    pub batch: u64,
    pub elem_bytes: u64,
    pub layers: Vec<Layer>,
}

impl ModelGraph {
    /// Builds a graph from `(name, kind, m, k, n)` records, assigning dense ids.
    pub fn from_layers<I, S>(
        name: impl Into<String>,
        batch: u64,
        elem_bytes: u64,
        layers: I,
    ) -> Self
    where
        I: IntoIterator<Item = (S, LayerKind, u64, u64, u64)>,
        S: Into<String>,
    {
        let layers = layers
            .into_iter()
            .enumerate()
            .map(|(id, (name, kind, m, k, n))| Layer {
                id,
                name: name.into(),
                shape: GemmShape::new(m, k, n, elem_bytes),
                kind,
            })
            .collect();
        Self {
            name: name.into(),
            batch,
            elem_bytes,
            layers,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.shape.macs()).sum()
    }
}

impl fmt::Display for ModelGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} layers, batch {}, {} MACs)",
            self.name,
            self.layers.len(),
            self.batch,
            self.total_macs()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub h_in: u64,
    pub w_in: u64,
    pub c_in: u64,
    pub c_out: u64,
    pub r: u64,
    pub s: u64,
    pub stride: u64,
    pub pad: u64,
}

impl ConvShape {
    /// Square input, square kernel.
    pub fn square(hw: u64, c_in: u64, c_out: u64, kernel: u64, stride: u64, pad: u64) -> Self {
        Self {
            h_in: hw,
            w_in: hw,
            c_in,
            c_out,
            r: kernel,
            s: kernel,
            stride,
            pad,
        }
    }

    /// Output spatial size `(h_out, w_out)`.
    pub fn output_dims(&self) -> Result<(u64, u64)> {
        let positive = [
            ("h_in", self.h_in),
            ("w_in", self.w_in),
            ("c_in", self.c_in),
            ("c_out", self.c_out),
            ("r", self.r),
            ("s", self.s),
            ("stride", self.stride),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::Shape {
                    field,
                    reason: "must be >= 1".into(),
                });
            }
        }
        let h_out = out_dim("h_out", self.h_in, self.r, self.stride, self.pad)?;
        let w_out = out_dim("w_out", self.w_in, self.s, self.stride, self.pad)?;
        Ok((h_out, w_out))
    }
}

fn out_dim(field: &'static str, input: u64, kernel: u64, stride: u64, pad: u64) -> Result<u64> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::Shape {
            field,
            reason: format!(
                "kernel {kernel} does not fit padded input {padded}; no output positions"
            ),
        });
    }
    // Trailing positions that the last stride step cannot reach are dropped.
    Ok((padded - kernel) / stride + 1)
}

/// Implicit-GEMM (im2col) lowering of a convolution.
pub fn lower_conv_to_gemm(conv: &ConvShape, batch: u64, elem_bytes: u64) -> Result<GemmShape> {
    if batch == 0 {
        return Err(Error::Shape {
            field: "batch",
            reason: "must be >= 1".into(),
        });
    }
    if elem_bytes == 0 {
        return Err(Error::Shape {
            field: "elem_bytes",
            reason: "must be >= 1".into(),
        });
    }
    let (h_out, w_out) = conv.output_dims()?;
    Ok(GemmShape::new(
        batch * h_out * w_out,
        conv.r * conv.s * conv.c_in,
        conv.c_out,
        elem_bytes,
    ))
}

/// Parameters of a single transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gpt2Params {
    pub d_model: u64,
    pub n_heads: u64,
    pub seq: u64,
    pub ffn_mult: u64,
    pub elem_bytes: u64,
}

impl Default for Gpt2Params {
    /// GPT-2 small at full context.
    fn default() -> Self {
        Self {
            d_model: 768,
            n_heads: 12,
            seq: 1024,
            ffn_mult: 4,
            elem_bytes: 1,
        }
    }
}

/// One GPT-2 transformer block as six GEMMs. All heads of each attention
/// matmul are folded into a single layer.
pub fn build_gpt2_block(p: &Gpt2Params) -> Result<ModelGraph> {
    let Gpt2Params {
        d_model: d,
        n_heads: h,
        seq,
        ffn_mult: f,
        elem_bytes,
    } = *p;
    for (name, v) in [
        ("d_model", d),
        ("n_heads", h),
        ("seq", seq),
        ("ffn_mult", f),
        ("elem_bytes", elem_bytes),
    ] {
        if v == 0 {
            return Err(Error::config(format!("gpt2-block: {name} must be >= 1")));
        }
    }
    if d % h != 0 {
        return Err(Error::config(format!(
            "gpt2-block: d_model {d} is not divisible by n_heads {h}"
        )));
    }
    use LayerKind::*;
    Ok(ModelGraph::from_layers(
        "gpt2-block",
        1,
        elem_bytes,
        [
            ("qkv_proj", Gemm, seq, d, 3 * d),
            ("attn_scores", AttentionMatmul, seq, d / h, seq * h),
            ("attn_values", AttentionMatmul, seq, seq, d),
            ("out_proj", Gemm, seq, d, d),
            ("ffn_up", Gemm, seq, d, f * d),
            ("ffn_down", Gemm, seq, f * d, d),
        ],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResNet50Params {
    pub batch: u64,
    pub elem_bytes: u64,
}

impl Default for ResNet50Params {
    fn default() -> Self {
        Self {
            batch: 1,
            elem_bytes: 1,
        }
    }
}

/// ResNet-50 (stride on the 3x3 conv of each bottleneck) lowered to 54
/// GEMMs: stem, 16 bottlenecks of three convs, the four projection-shortcut
/// convs placed after the first bottleneck of each stage, and the classifier.
/// Pooling, batchnorm, activations and residual adds are not modeled.
pub fn build_resnet50(p: &ResNet50Params) -> Result<ModelGraph> {
    let ResNet50Params { batch, elem_bytes } = *p;
    if batch == 0 {
        return Err(Error::config("resnet50: batch must be >= 1"));
    }
    if elem_bytes == 0 {
        return Err(Error::config("resnet50: elem_bytes must be >= 1"));
    }

    let mut layers = Vec::with_capacity(54);
    let mut push = |name: String, conv: ConvShape| -> Result<()> {
        let s = lower_conv_to_gemm(&conv, batch, elem_bytes)?;
        layers.push((name, LayerKind::ConvLowered, s.m, s.k, s.n));
        Ok(())
    };

    push("conv1".into(), ConvShape::square(224, 3, 64, 7, 2, 3))?;

    // 3x3/2 max-pool: 112 -> 56.
    let mut hw = 56;
    let mut c_in = 64;
    let stages = [
        (64, 256, 3, 1),
        (128, 512, 4, 2),
        (256, 1024, 6, 2),
        (512, 2048, 3, 2),
    ];
    for (stage, &(mid, out, blocks, first_stride)) in stages.iter().enumerate() {
        for block in 0..blocks {
            let stride = if block == 0 { first_stride } else { 1 };
            let prefix = format!("layer{}.{}", stage + 1, block);
            let hw_out = ConvShape::square(hw, mid, mid, 3, stride, 1)
                .output_dims()?
                .0;
            push(
                format!("{prefix}.conv1"),
                ConvShape::square(hw, c_in, mid, 1, 1, 0),
            )?;
            push(
                format!("{prefix}.conv2"),
                ConvShape::square(hw, mid, mid, 3, stride, 1),
            )?;
            push(
                format!("{prefix}.conv3"),
                ConvShape::square(hw_out, mid, out, 1, 1, 0),
            )?;
            if block == 0 {
                push(
                    format!("{prefix}.downsample"),
                    ConvShape::square(hw, c_in, out, 1, stride, 0),
                )?;
            }
            hw = hw_out;
            c_in = out;
        }
    }

    let mut graph = ModelGraph::from_layers("resnet50", batch, elem_bytes, layers);
    let id = graph.layers.len();
    graph.layers.push(Layer {
        id,
        name: "fc".into(),
        shape: GemmShape::new(batch, 2048, 1000, elem_bytes),
        kind: LayerKind::Gemm,
    });
    Ok(graph)
}

/// Bytes crossing a cut placed before layer `cut`: the output tensor of
/// layer `cut - 1`.
pub fn activation_bytes_at_cut(g: &ModelGraph, cut: usize) -> Result<u64> {
    if cut == 0 || cut >= g.layers.len() {
        return Err(Error::Index {
            index: cut,
            reason: format!("cut must lie in 1..={}", g.layers.len().saturating_sub(1)),
        });
    }
    Ok(g.layers[cut - 1].shape.output_bytes())
}

/// Checks dense ids, positive shapes, nonempty names and batch.
pub fn validate_graph(g: &ModelGraph) -> Result<()> {
    let mut issues = Vec::new();
    if g.batch == 0 {
        issues.push("batch must be >= 1".to_string());
    }
    if g.elem_bytes == 0 {
        issues.push("elem_bytes must be >= 1".to_string());
    }
    let mut seen = vec![false; g.layers.len()];
    for (pos, layer) in g.layers.iter().enumerate() {
        if layer.id != pos {
            issues.push(format!(
                "layer {}: id at position {pos} breaks chain order",
                layer.id
            ));
        }
        if let Some(flag) = seen.get_mut(layer.id) {
            if *flag {
                issues.push(format!("layer {}: duplicated id", layer.id));
            }
            *flag = true;
        }
        if layer.name.is_empty() {
            issues.push(format!("layer {}: empty name", layer.id));
        }
        if !layer.shape.is_valid() {
            let s = layer.shape;
            issues.push(format!(
                "layer {}: non-positive shape (m={}, k={}, n={}, elem_bytes={})",
                layer.id, s.m, s.k, s.n, s.elem_bytes
            ));
        }
        if layer.shape.elem_bytes != g.elem_bytes {
            issues.push(format!(
                "layer {}: elem_bytes {} differs from graph elem_bytes {}",
                layer.id, layer.shape.elem_bytes, g.elem_bytes
            ));
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Graph(issues))
    }
}

/// On-disk workload description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub name: String,
    pub batch: u64,
    pub elem_bytes: u64,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub id: usize,
    pub name: String,
    pub kind: LayerKind,
    pub m: u64,
    pub k: u64,
    pub n: u64,
}

impl From<ModelGraph> for WorkloadFile {
    fn from(g: ModelGraph) -> Self {
        Self {
            name: g.name,
            batch: g.batch,
            elem_bytes: g.elem_bytes,
            layers: g
                .layers
                .into_iter()
                .map(|l| LayerRecord {
                    id: l.id,
                    name: l.name,
                    kind: l.kind,
                    m: l.shape.m,
                    k: l.shape.k,
                    n: l.shape.n,
                })
                .collect(),
        }
    }
}

impl TryFrom<WorkloadFile> for ModelGraph {
    type Error = Error;

    fn try_from(f: WorkloadFile) -> Result<Self> {
        let elem_bytes = f.elem_bytes;
        let g = ModelGraph {
            name: f.name,
            batch: f.batch,
            elem_bytes,
            layers: f
                .layers
                .into_iter()
                .map(|r| Layer {
                    id: r.id,
                    name: r.name,
                    shape: GemmShape::new(r.m, r.k, r.n, elem_bytes),
                    kind: r.kind,
                })
                .collect(),
        };
        validate_graph(&g)?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lower_pointwise_conv() {
        let c = ConvShape::square(7, 64, 64, 1, 1, 0);
        assert_eq!(
            lower_conv_to_gemm(&c, 1, 1).unwrap(),
            GemmShape::new(49, 64, 64, 1)
        );
    }

    #[test]
    fn lower_resnet_stem() {
        let c = ConvShape::square(224, 3, 64, 7, 2, 3);
        assert_eq!(c.output_dims().unwrap(), (112, 112));
        assert_eq!(
            lower_conv_to_gemm(&c, 1, 1).unwrap(),
            GemmShape::new(12544, 147, 64, 1)
        );
    }

    #[test]
    fn lower_identity_conv() {
        let c = ConvShape::square(1, 1, 1, 1, 1, 0);
        assert_eq!(
            lower_conv_to_gemm(&c, 1, 1).unwrap(),
            GemmShape::new(1, 1, 1, 1)
        );
    }

    #[test]
    fn lower_rejects_empty_output() {
        let c = ConvShape::square(2, 4, 4, 7, 1, 1);
        match lower_conv_to_gemm(&c, 1, 1) {
            Err(Error::Shape { field, .. }) => assert_eq!(field, "h_out"),
            other => panic!("expected shape error, got {other:?}"),
        }
        let mut c = ConvShape::square(8, 4, 4, 3, 1, 0);
        c.w_in = 2;
        match lower_conv_to_gemm(&c, 1, 1) {
            Err(Error::Shape { field, .. }) => assert_eq!(field, "w_out"),
            other => panic!("expected shape error, got {other:?}"),
        }
        let mut c = ConvShape::square(8, 4, 4, 3, 1, 0);
        c.stride = 0;
        assert!(matches!(
            lower_conv_to_gemm(&c, 1, 1),
            Err(Error::Shape {
                field: "stride",
                ..
            })
        ));
    }

    #[test]
    fn lower_floors_strided_output() {
        // 3x3/2 pad 1 on 56 -> 28, as in every stride-2 bottleneck.
        let c = ConvShape::square(56, 128, 128, 3, 2, 1);
        assert_eq!(c.output_dims().unwrap(), (28, 28));
    }

    #[test]
    fn gpt2_default_block() {
        let g = build_gpt2_block(&Gpt2Params::default()).unwrap();
        assert_eq!(g.len(), 6);
        let expected: u64 = 1024 * 768 * 2304
            + 12 * (1024 * 64 * 1024)
            + 1024 * 1024 * 768
            + 1024 * 768 * 768
            + 2 * (1024 * 768 * 3072);
        assert_eq!(g.total_macs(), expected);
        assert_eq!(g.total_macs(), 8_858_370_048);
        validate_graph(&g).unwrap();
    }

    #[test]
    fn gpt2_unit_block() {
        let g = build_gpt2_block(&Gpt2Params {
            d_model: 1,
            n_heads: 1,
            seq: 1,
            ffn_mult: 1,
            elem_bytes: 1,
        })
        .unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.layers[0].shape, GemmShape::new(1, 1, 3, 1));
        for l in &g.layers[1..] {
            assert_eq!(l.shape, GemmShape::new(1, 1, 1, 1));
        }
    }

    #[test]
    fn gpt2_rejects_indivisible_heads() {
        let p = Gpt2Params {
            n_heads: 5,
            ..Default::default()
        };
        assert!(matches!(build_gpt2_block(&p), Err(Error::Config(_))));
    }

    #[test]
    fn gpt2_seq_doubling_scales_exactly() {
        let base = build_gpt2_block(&Gpt2Params::default()).unwrap();
        let doubled = build_gpt2_block(&Gpt2Params {
            seq: 2048,
            ..Default::default()
        })
        .unwrap();
        for (a, b) in base.layers.iter().zip(&doubled.layers) {
            let factor = match a.kind {
                LayerKind::AttentionMatmul => 4,
                _ => 2,
            };
            assert_eq!(b.shape.macs(), factor * a.shape.macs(), "{}", a.name);
        }
    }

    #[test]
    fn resnet50_structure() {
        let g = build_resnet50(&ResNet50Params::default()).unwrap();
        assert_eq!(g.len(), 54);
        assert_eq!(g.layers[0].shape, GemmShape::new(12544, 147, 64, 1));
        assert_eq!(g.layers[53].shape, GemmShape::new(1, 2048, 1000, 1));
        validate_graph(&g).unwrap();
    }

    #[test]
    fn resnet50_batch_folds_into_m() {
        let one = build_resnet50(&ResNet50Params::default()).unwrap();
        let two = build_resnet50(&ResNet50Params {
            batch: 2,
            elem_bytes: 1,
        })
        .unwrap();
        assert_eq!(two.batch, 2);
        for (a, b) in one.layers.iter().zip(&two.layers) {
            assert_eq!(b.shape.m, 2 * a.shape.m);
            assert_eq!((b.shape.k, b.shape.n), (a.shape.k, a.shape.n));
        }
    }

    #[test]
    fn cut_bytes() {
        let g = build_gpt2_block(&Gpt2Params::default()).unwrap();
        // Cut between ffn_up and ffn_down.
        assert_eq!(activation_bytes_at_cut(&g, 5).unwrap(), 3_145_728);

        let tiny = ModelGraph::from_layers(
            "t",
            1,
            2,
            [
                ("a", LayerKind::Gemm, 1, 1, 1),
                ("b", LayerKind::Gemm, 4, 4, 4),
            ],
        );
        assert_eq!(activation_bytes_at_cut(&tiny, 1).unwrap(), 2);
        assert!(matches!(
            activation_bytes_at_cut(&tiny, 0),
            Err(Error::Index { index: 0, .. })
        ));
        assert!(activation_bytes_at_cut(&tiny, 2).is_err());
    }

    #[test]
    fn validate_reports_duplicate_id() {
        let mut g = build_resnet50(&ResNet50Params::default()).unwrap();
        g.layers[3].id = 2;
        let Err(Error::Graph(issues)) = validate_graph(&g) else {
            panic!("expected graph error");
        };
        assert!(
            issues.iter().any(|i| i.contains("layer 2: duplicated id")),
            "{issues:?}"
        );
    }

    #[test]
    fn validate_reports_zero_dim() {
        let mut g = build_gpt2_block(&Gpt2Params::default()).unwrap();
        g.layers[1].shape.m = 0;
        let Err(Error::Graph(issues)) = validate_graph(&g) else {
            panic!("expected graph error");
        };
        assert_eq!(issues.len(), 1);
        assert!(issues[0].starts_with("layer 1:"));
    }

    #[test]
    fn workload_file_field_names() {
        let g = ModelGraph::from_layers("t", 1, 1, [("a", LayerKind::ConvLowered, 2, 3, 4)]);
        let v = serde_json::to_value(&g).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "name": "t", "batch": 1, "elem_bytes": 1,
                "layers": [{"id": 0, "name": "a", "kind": "conv-lowered", "m": 2, "k": 3, "n": 4}]
            })
        );
    }

    #[test]
    fn workload_file_rejects_invalid_graph() {
        let text = r#"{"name":"x","batch":1,"elem_bytes":1,
            "layers":[{"id":0,"name":"a","kind":"gemm","m":0,"k":1,"n":1}]}"#;
        assert!(serde_json::from_str::<ModelGraph>(text).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = ModelGraph> {
        let kind = prop_oneof![
            Just(LayerKind::Gemm),
            Just(LayerKind::ConvLowered),
            Just(LayerKind::AttentionMatmul)
        ];
        (
            1u64..4,
            1u64..3,
            prop::collection::vec((kind, 1u64..5000, 1u64..5000, 1u64..5000), 0..10),
        )
            .prop_map(|(batch, eb, ls)| {
                ModelGraph::from_layers(
                    "prop",
                    batch,
                    eb,
                    ls.into_iter()
                        .enumerate()
                        .map(|(i, (kind, m, k, n))| (format!("l{i}"), kind, m, k, n)),
                )
            })
    }

    proptest! {
        #[test]
        fn graph_json_round_trip(g in arb_graph()) {
            let text = serde_json::to_string(&g).unwrap();
            let back: ModelGraph = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, g);
        }

        #[test]
        fn lowering_preserves_macs(
            hw in 1u64..64, c_in in 1u64..64, c_out in 1u64..64,
            kernel in 1u64..8, stride in 1u64..4, pad in 0u64..4, batch in 1u64..4,
        ) {
            let conv = ConvShape::square(hw, c_in, c_out, kernel, stride, pad);
            if let Ok((h_out, w_out)) = conv.output_dims() {
                let s = lower_conv_to_gemm(&conv, batch, 1).unwrap();
                prop_assert_eq!(s.macs(), batch * h_out * w_out * kernel * kernel * c_in * c_out);
            }
        }

        #[test]
        fn total_macs_is_layer_sum(g in arb_graph()) {
            let mut sum = 0u64;
            for l in &g.layers {
                sum += l.shape.m * l.shape.k * l.shape.n;
            }
            prop_assert_eq!(g.total_macs(), sum);
        }
    }
}
