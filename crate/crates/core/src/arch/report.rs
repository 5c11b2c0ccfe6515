use serde::Serialize;

use super::graph::CellGraph;
use super::scale::{CellDims, ScaledArchitecture};

#[derive(Serialize)]
struct GraphDoc {
    scale_factor: f64,
    model_width: usize,
    embedding_params: u64,
    total_params: u64,
    encoder: CellDoc,
    decoder: CellDoc,
}

#[derive(Serialize)]
struct CellDoc {
    repeats: usize,
    input_width: usize,
    output_width: usize,
    raw_output_width: usize,
    params_per_repeat: u64,
    output_addends: Vec<String>,
    nodes: Vec<NodeDoc>,
    blocks: Vec<BlockDoc>,
}

#[derive(Serialize)]
struct NodeDoc {
    id: String,
    input: String,
    norm: String,
    layer: String,
    rel_dim: u8,
    activation: String,
    causal: bool,
    width_in: usize,
    width_out: usize,
    params: u64,
}

#[derive(Serialize)]
struct BlockDoc {
    id: String,
    combiner: String,
    inputs: Vec<String>,
    width: usize,
}

fn cell_doc(graph: &CellGraph, dims: &CellDims) -> CellDoc {
    let mut nodes = Vec::new();
    let mut blocks = Vec::new();
    for (b, (block, bdims)) in graph.blocks.iter().zip(&dims.branches).enumerate() {
        let mut inputs = Vec::new();
        for (branch, d) in block.branches().into_iter().zip(bdims) {
            let id = format!("b{b}.{}", branch.side);
            if d.output_width.is_some() {
                inputs.push(id.clone());
            }
            nodes.push(NodeDoc {
                id,
                input: format!("h{}", branch.input),
                norm: branch.normalization.to_string(),
                layer: branch.layer.to_string(),
                rel_dim: branch.rel_dim.get(),
                activation: branch.activation.to_string(),
                causal: branch.causal,
                width_in: d.input_width,
                width_out: d.output_width.unwrap_or(0),
                params: d.params,
            });
        }
        blocks.push(BlockDoc {
            id: format!("h{}", b + 1),
            combiner: block.combiner.to_string(),
            inputs,
            width: dims.hidden[b + 1],
        });
    }
    CellDoc {
        repeats: graph.repeats,
        input_width: dims.input_width,
        output_width: dims.output_width,
        raw_output_width: dims.raw_output_width,
        params_per_repeat: dims.params_per_repeat,
        output_addends: graph.output_addends.iter().map(|h| format!("h{h}")).collect(),
        nodes,
        blocks,
    }
}

/// Describes every node, edge, width and per-node parameter count of `arch`
/// as a TOML document.
pub fn graph_report(arch: &ScaledArchitecture) -> String {
    let doc = GraphDoc {
        scale_factor: arch.scale_factor,
        model_width: arch.model_width,
        embedding_params: arch.embedding_params,
        total_params: arch.total_params,
        encoder: cell_doc(&arch.encoder_graph, &arch.encoder_dims),
        decoder: cell_doc(&arch.decoder_graph, &arch.decoder_dims),
    };
    toml::to_string(&doc).expect("graph document always serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{scale_dimensions, ModelConfig};
    use crate::search_space::seeds::et_seed;

    #[test]
    fn report_lists_every_branch() {
        let arch = scale_dimensions(&et_seed(), &ModelConfig::default()).unwrap();
        let text = graph_report(&arch);
        let value: toml::Value = toml::from_str(&text).unwrap();
        let enc_nodes = value["encoder"]["nodes"].as_array().unwrap();
        let dec_nodes = value["decoder"]["nodes"].as_array().unwrap();
        assert_eq!(enc_nodes.len(), 12);
        assert_eq!(dec_nodes.len(), 16);
        assert_eq!(value["total_params"].as_integer().unwrap() as u64, arch.total_params);
        assert!(text.contains("separable_conv_11x1"));
    }
}
