//! A small ONNX interpreter covering the operator set that exported
//! encoder classifiers (BERT, DistilBERT) use. Evaluation follows the
//! graph's node order, which the format requires to be topological.

mod ops;
mod proto;
mod tensor;

pub use tensor::Tensor;

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use proto::{ModelProto, NodeProto};

#[derive(Debug)]
pub struct OnnxModel {
    nodes: Vec<NodeProto>,
    initializers: HashMap<String, Tensor>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    opset: i64,
}

impl OnnxModel {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let m = ModelProto::decode(bytes)?;
        let initializers = m
            .graph
            .initializers
            .iter()
            .map(|t| Ok((t.name.clone(), Tensor::from_proto(t)?)))
            .collect::<Result<HashMap<_, _>>>()?;
        let inputs = m
            .graph
            .inputs
            .into_iter()
            .filter(|n| !initializers.contains_key(n))
            .collect();
        Ok(OnnxModel {
            nodes: m.graph.nodes,
            initializers,
            inputs,
            outputs: m.graph.outputs,
            opset: m.opset,
        })
    }

    /// Graph inputs that must be fed (initializers excluded).
    pub fn input_names(&self) -> &[String] {
        &self.inputs
    }

    pub fn output_names(&self) -> &[String] {
        &self.outputs
    }

    /// Runs the graph; returns the graph outputs in declaration order.
    pub fn run(&self, feeds: Vec<(String, Tensor)>) -> Result<Vec<Tensor>> {
        let mut values: HashMap<String, Tensor> = feeds.into_iter().collect();
        for name in &self.inputs {
            if !values.contains_key(name) {
                return Err(Error::Backend(format!("missing graph input {name}")));
            }
        }
        // Drop intermediates after their last use.
        let mut last_use: HashMap<&str, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for inp in &n.inputs {
                last_use.insert(inp.as_str(), i);
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let outs = {
                let args: Vec<Option<&Tensor>> = node
                    .inputs
                    .iter()
                    .map(|name| {
                        if name.is_empty() {
                            Ok(None)
                        } else {
                            values
                                .get(name)
                                .or_else(|| self.initializers.get(name))
                                .map(Some)
                                .ok_or_else(|| Error::Backend(format!("value {name} is undefined")))
                        }
                    })
                    .collect::<Result<_>>()?;
                ops::eval(node, &args, self.opset)
                    .map_err(|e| Error::Backend(format!("{} node {:?}: {e}", node.op_type, node.name)))?
            };
            for (name, t) in node.outputs.iter().zip(outs) {
                if !name.is_empty() {
                    values.insert(name.clone(), t);
                }
            }
            for inp in &node.inputs {
                if last_use.get(inp.as_str()) == Some(&i) && !self.outputs.contains(inp) {
                    values.remove(inp);
                }
            }
        }
        self.outputs
            .iter()
            .map(|o| {
                values
                    .remove(o)
                    .or_else(|| self.initializers.get(o).cloned())
                    .ok_or_else(|| Error::Backend(format!("graph output {o} was not produced")))
            })
            .collect()
    }
}
