use ndarray::{ArrayD, IxDyn, Zip};

use super::proto::TensorProto;
use crate::error::{Error, Result};

/// Runtime value: the element types exported transformer graphs use.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F32(ArrayD<f32>),
    I64(ArrayD<i64>),
    Bool(ArrayD<bool>),
}

pub(crate) fn backend(msg: impl Into<String>) -> Error {
    Error::Backend(msg.into())
}

fn usize_dims(dims: &[i64]) -> Result<Vec<usize>> {
    dims.iter()
        .map(|&d| usize::try_from(d).map_err(|_| backend(format!("negative dimension {d}"))))
        .collect()
}

fn from_vec<T>(shape: &[usize], data: Vec<T>) -> Result<ArrayD<T>> {
    ArrayD::from_shape_vec(IxDyn(shape), data).map_err(|e| backend(format!("tensor data/shape mismatch: {e}")))
}

impl Tensor {
    pub fn from_proto(t: &TensorProto) -> Result<Tensor> {
        if t.external {
            return Err(backend(format!(
                "initializer {} uses external data, which is not supported",
                t.name
            )));
        }
        let shape = usize_dims(&t.dims)?;
        let raw = &t.raw_data;
        let chunks = |w: usize| raw.chunks_exact(w);
        match t.data_type {
            1 => {
                let data = if raw.is_empty() {
                    t.float_data.clone()
                } else {
                    chunks(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect()
                };
                Ok(Tensor::F32(from_vec(&shape, data)?))
            }
            11 => {
                let data = if raw.is_empty() {
                    t.double_data.iter().map(|&x| x as f32).collect()
                } else {
                    chunks(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as f32)
                        .collect()
                };
                Ok(Tensor::F32(from_vec(&shape, data)?))
            }
            7 => {
                let data = if raw.is_empty() {
                    t.int64_data.clone()
                } else {
                    chunks(8)
                        .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect()
                };
                Ok(Tensor::I64(from_vec(&shape, data)?))
            }
            6 => {
                let data = if raw.is_empty() {
                    t.int32_data.clone()
                } else {
                    chunks(4)
                        .map(|c| i64::from(i32::from_le_bytes(c.try_into().expect("4 bytes"))))
                        .collect()
                };
                Ok(Tensor::I64(from_vec(&shape, data)?))
            }
            9 => {
                let data = if raw.is_empty() {
                    t.int32_data.iter().map(|&v| v != 0).collect()
                } else {
                    raw.iter().map(|&b| b != 0).collect()
                };
                Ok(Tensor::Bool(from_vec(&shape, data)?))
            }
            other => Err(backend(format!(
                "tensor {} has unsupported element type {other}",
                t.name
            ))),
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            Tensor::F32(a) => a.shape(),
            Tensor::I64(a) => a.shape(),
            Tensor::Bool(a) => a.shape(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Tensor::F32(_) => "float",
            Tensor::I64(_) => "int64",
            Tensor::Bool(_) => "bool",
        }
    }

    pub fn f32(&self) -> Result<&ArrayD<f32>> {
        match self {
            Tensor::F32(a) => Ok(a),
            other => Err(backend(format!("expected float tensor, got {}", other.type_name()))),
        }
    }

    pub fn i64(&self) -> Result<&ArrayD<i64>> {
        match self {
            Tensor::I64(a) => Ok(a),
            other => Err(backend(format!("expected int64 tensor, got {}", other.type_name()))),
        }
    }

    pub fn bool(&self) -> Result<&ArrayD<bool>> {
        match self {
            Tensor::Bool(a) => Ok(a),
            other => Err(backend(format!("expected bool tensor, got {}", other.type_name()))),
        }
    }

    /// Elements of an integer (or integral float) tensor as i64.
    pub fn to_i64_vec(&self) -> Result<Vec<i64>> {
        match self {
            Tensor::I64(a) => Ok(a.iter().copied().collect()),
            Tensor::F32(a) => Ok(a.iter().map(|&x| x as i64).collect()),
            Tensor::Bool(a) => Ok(a.iter().map(|&x| i64::from(x)).collect()),
        }
    }
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(backend(format!("cannot broadcast {a:?} with {b:?}"))),
        };
    }
    Ok(out)
}

/// Elementwise binary map with numpy broadcasting.
pub(crate) fn zip_map<A: Clone, B: Clone, R>(a: &ArrayD<A>, b: &ArrayD<B>, f: impl Fn(A, B) -> R) -> Result<ArrayD<R>> {
    let shape = broadcast_shape(a.shape(), b.shape())?;
    let av = a.broadcast(IxDyn(&shape)).ok_or_else(|| backend("broadcast failed"))?;
    let bv = b.broadcast(IxDyn(&shape)).ok_or_else(|| backend("broadcast failed"))?;
    Ok(Zip::from(&av).and(&bv).map_collect(|x, y| f(x.clone(), y.clone())))
}

/// Contiguous copy with a new shape.
pub(crate) fn reshape<T: Clone>(a: &ArrayD<T>, shape: &[usize]) -> Result<ArrayD<T>> {
    let data: Vec<T> = a.iter().cloned().collect();
    from_vec(shape, data)
}
