//! Operator kernels. Each takes the node, its resolved inputs (`None` for
//! omitted optional inputs) and the model's opset.

use ndarray::{concatenate, Array2, ArrayD, ArrayView2, Axis, Ix2, IxDyn, Slice};

use super::proto::NodeProto;
use super::tensor::{backend, broadcast_shape, reshape, zip_map, Tensor};
use crate::error::Result;

type Inputs<'a> = [Option<&'a Tensor>];

fn input<'a>(node: &NodeProto, inputs: &Inputs<'a>, i: usize) -> Result<&'a Tensor> {
    inputs
        .get(i)
        .copied()
        .flatten()
        .ok_or_else(|| backend(format!("{} node {:?} is missing input {i}", node.op_type, node.name)))
}

fn opt<'a>(inputs: &Inputs<'a>, i: usize) -> Option<&'a Tensor> {
    inputs.get(i).copied().flatten()
}

fn attr_i(node: &NodeProto, name: &str, default: i64) -> i64 {
    node.attr(name).and_then(|a| a.i).unwrap_or(default)
}

fn attr_f(node: &NodeProto, name: &str, default: f32) -> f32 {
    node.attr(name).and_then(|a| a.f).unwrap_or(default)
}

fn attr_ints(node: &NodeProto, name: &str) -> Option<Vec<i64>> {
    node.attr(name).map(|a| a.ints.clone())
}

fn norm_axis(axis: i64, rank: usize) -> Result<usize> {
    let r = rank as i64;
    let a = if axis < 0 { axis + r } else { axis };
    if (0..r.max(1)).contains(&a) {
        Ok(a as usize)
    } else {
        Err(backend(format!("axis {axis} out of range for rank {rank}")))
    }
}

/// Axes from the attribute (older opsets) or the given input.
fn axes_of(node: &NodeProto, inputs: &Inputs, idx: usize) -> Result<Option<Vec<i64>>> {
    if let Some(a) = attr_ints(node, "axes") {
        return Ok(Some(a));
    }
    opt(inputs, idx).map(Tensor::to_i64_vec).transpose()
}

fn arith(node: &NodeProto, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let op = node.op_type.as_str();
    match (a, b) {
        (Tensor::F32(x), Tensor::F32(y)) => Ok(Tensor::F32(match op {
            "Add" => zip_map(x, y, |p, q| p + q)?,
            "Sub" => zip_map(x, y, |p, q| p - q)?,
            "Mul" => zip_map(x, y, |p, q| p * q)?,
            "Div" => zip_map(x, y, |p, q| p / q)?,
            "Pow" => zip_map(x, y, f32::powf)?,
            "Max" => zip_map(x, y, f32::max)?,
            "Min" => zip_map(x, y, f32::min)?,
            _ => unreachable!("arith dispatch"),
        })),
        (Tensor::F32(x), Tensor::I64(y)) if op == "Pow" => Ok(Tensor::F32(zip_map(x, y, |p, q| p.powi(q as i32))?)),
        (Tensor::I64(x), Tensor::I64(y)) => Ok(Tensor::I64(match op {
            "Add" => zip_map(x, y, |p, q| p + q)?,
            "Sub" => zip_map(x, y, |p, q| p - q)?,
            "Mul" => zip_map(x, y, |p, q| p * q)?,
            "Div" => {
                if y.iter().any(|&q| q == 0) {
                    return Err(backend("integer division by zero"));
                }
                zip_map(x, y, |p, q| p / q)?
            }
            "Pow" => zip_map(x, y, |p, q| p.pow(q as u32))?,
            "Max" => zip_map(x, y, i64::max)?,
            "Min" => zip_map(x, y, i64::min)?,
            _ => unreachable!("arith dispatch"),
        })),
        _ => Err(backend(format!(
            "{op} on {} and {} is not supported",
            a.type_name(),
            b.type_name()
        ))),
    }
}

fn compare(node: &NodeProto, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    fn cmp<T: PartialOrd + Clone>(op: &str, x: &ArrayD<T>, y: &ArrayD<T>) -> Result<ArrayD<bool>> {
        match op {
            "Equal" => zip_map(x, y, |p, q| p == q),
            "Less" => zip_map(x, y, |p, q| p < q),
            "LessOrEqual" => zip_map(x, y, |p, q| p <= q),
            "Greater" => zip_map(x, y, |p, q| p > q),
            "GreaterOrEqual" => zip_map(x, y, |p, q| p >= q),
            _ => unreachable!("compare dispatch"),
        }
    }
    let op = node.op_type.as_str();
    Ok(Tensor::Bool(match (a, b) {
        (Tensor::F32(x), Tensor::F32(y)) => cmp(op, x, y)?,
        (Tensor::I64(x), Tensor::I64(y)) => cmp(op, x, y)?,
        (Tensor::Bool(x), Tensor::Bool(y)) if op == "Equal" => cmp(op, x, y)?,
        _ => {
            return Err(backend(format!(
                "{op} on {} and {} is not supported",
                a.type_name(),
                b.type_name()
            )))
        }
    }))
}

fn logical(node: &NodeProto, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (x, y) = (a.bool()?, b.bool()?);
    Ok(Tensor::Bool(match node.op_type.as_str() {
        "And" => zip_map(x, y, |p, q| p && q)?,
        "Or" => zip_map(x, y, |p, q| p || q)?,
        "Xor" => zip_map(x, y, |p, q| p ^ q)?,
        _ => unreachable!("logical dispatch"),
    }))
}

fn unary_f32(node: &NodeProto, a: &Tensor) -> Result<Tensor> {
    let x = a.f32()?;
    let f: fn(f32) -> f32 = match node.op_type.as_str() {
        "Sqrt" => f32::sqrt,
        "Erf" => libm::erff,
        "Relu" => |v| v.max(0.0),
        "Tanh" => f32::tanh,
        "Sigmoid" => |v| 1.0 / (1.0 + (-v).exp()),
        "Exp" => f32::exp,
        "Log" => f32::ln,
        "Reciprocal" => |v| 1.0 / v,
        _ => unreachable!("unary dispatch"),
    };
    Ok(Tensor::F32(x.mapv(f)))
}

fn matmul2(a: ArrayView2<f32>, b: ArrayView2<f32>) -> Result<Array2<f32>> {
    if a.ncols() != b.nrows() {
        return Err(backend(format!(
            "MatMul inner dimensions differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.dot(&b))
}

fn matmul(a: &ArrayD<f32>, b: &ArrayD<f32>) -> Result<ArrayD<f32>> {
    let (ra, rb) = (a.ndim(), b.ndim());
    if ra < 2 || rb < 2 {
        // promote vectors per numpy rules
        let a2 = if ra == 1 { reshape(a, &[1, a.len()])? } else { a.clone() };
        let b2 = if rb == 1 { reshape(b, &[b.len(), 1])? } else { b.clone() };
        let out = matmul(&a2, &b2)?;
        let mut shape = out.shape().to_vec();
        if rb == 1 {
            shape.pop();
        }
        if ra == 1 {
            shape.remove(shape.len() - if rb == 1 { 1 } else { 2 });
        }
        return reshape(&out, &shape);
    }
    let (m, k) = (a.shape()[ra - 2], a.shape()[ra - 1]);
    let n = b.shape()[rb - 1];
    if rb == 2 {
        // fold the batch into rows
        let rows = a.len() / k.max(1);
        let a2 = reshape(a, &[rows, k])?.into_dimensionality::<Ix2>().expect("rank 2");
        let b2 = b.view().into_dimensionality::<Ix2>().expect("rank 2");
        let out = matmul2(a2.view(), b2)?;
        let mut shape = a.shape().to_vec();
        *shape.last_mut().expect("rank >= 2") = n;
        return reshape(&out.into_dyn(), &shape);
    }
    let batch = broadcast_shape(&a.shape()[..ra - 2], &b.shape()[..rb - 2])?;
    let mut a_shape = batch.clone();
    a_shape.extend([m, k]);
    let mut b_shape = batch.clone();
    b_shape.extend([b.shape()[rb - 2], n]);
    let av = a
        .broadcast(IxDyn(&a_shape))
        .ok_or_else(|| backend("MatMul broadcast"))?;
    let bv = b
        .broadcast(IxDyn(&b_shape))
        .ok_or_else(|| backend("MatMul broadcast"))?;
    let count: usize = batch.iter().product();
    let av = reshape(&av.to_owned(), &[count, m, k])?;
    let bv = reshape(&bv.to_owned(), &[count, b_shape[b_shape.len() - 2], n])?;
    let mut data = Vec::with_capacity(count * m * n);
    for i in 0..count {
        let x = av.index_axis(Axis(0), i).into_dimensionality::<Ix2>().expect("rank 2");
        let y = bv.index_axis(Axis(0), i).into_dimensionality::<Ix2>().expect("rank 2");
        data.extend(matmul2(x, y)?.iter().copied());
    }
    let mut shape = batch;
    shape.extend([m, n]);
    ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| backend(e.to_string()))
}

fn gemm(node: &NodeProto, inputs: &Inputs) -> Result<Tensor> {
    let a = input(node, inputs, 0)?.f32()?;
    let b = input(node, inputs, 1)?.f32()?;
    let a2 = a
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| backend("Gemm A must be 2-D"))?;
    let b2 = b
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| backend("Gemm B must be 2-D"))?;
    let a2 = if attr_i(node, "transA", 0) != 0 {
        a2.reversed_axes()
    } else {
        a2
    };
    let b2 = if attr_i(node, "transB", 0) != 0 {
        b2.reversed_axes()
    } else {
        b2
    };
    let alpha = attr_f(node, "alpha", 1.0);
    let beta = attr_f(node, "beta", 1.0);
    let mut y = matmul2(a2, b2)?.into_dyn() * alpha;
    if let Some(c) = opt(inputs, 2) {
        y = zip_map(&y, c.f32()?, |p, q| p + beta * q)?;
    }
    Ok(Tensor::F32(y))
}

fn softmax(node: &NodeProto, x: &ArrayD<f32>, opset: i64) -> Result<ArrayD<f32>> {
    let default = if opset >= 13 { -1 } else { 1 };
    let axis = norm_axis(attr_i(node, "axis", default), x.ndim())?;
    if opset < 13 && axis != x.ndim() - 1 {
        return Err(backend("Softmax before opset 13 is only supported on the last axis"));
    }
    let mut out = x.clone();
    for mut lane in out.lanes_mut(Axis(axis)) {
        let max = lane.fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        lane.mapv_inplace(|v| (v - max).exp());
        let sum = lane.sum();
        lane.mapv_inplace(|v| v / sum);
    }
    Ok(out)
}

fn reduce(node: &NodeProto, inputs: &Inputs) -> Result<Tensor> {
    let x = input(node, inputs, 0)?.f32()?;
    let rank = x.ndim();
    let keep = attr_i(node, "keepdims", 1) != 0;
    let mut axes: Vec<usize> = match axes_of(node, inputs, 1)? {
        Some(a) if !a.is_empty() => a.iter().map(|&v| norm_axis(v, rank)).collect::<Result<_>>()?,
        _ => (0..rank).collect(),
    };
    axes.sort_unstable();
    axes.dedup();
    let mut out = x.clone();
    for &ax in axes.iter().rev() {
        out = match node.op_type.as_str() {
            "ReduceMean" => out.mean_axis(Axis(ax)).ok_or_else(|| backend("mean of empty axis"))?,
            "ReduceSum" => out.sum_axis(Axis(ax)),
            "ReduceMax" => out.fold_axis(Axis(ax), f32::NEG_INFINITY, |m, &v| m.max(v)),
            _ => unreachable!("reduce dispatch"),
        };
    }
    if keep {
        for &ax in &axes {
            out = out.insert_axis(Axis(ax));
        }
    }
    Ok(Tensor::F32(out))
}

fn layer_norm(node: &NodeProto, inputs: &Inputs) -> Result<Tensor> {
    let x = input(node, inputs, 0)?.f32()?;
    let scale = input(node, inputs, 1)?.f32()?;
    let axis = norm_axis(attr_i(node, "axis", -1), x.ndim())?;
    let eps = attr_f(node, "epsilon", 1e-5);
    let inner: usize = x.shape()[axis..].iter().product();
    let rows = x.len() / inner.max(1);
    let flat = reshape(x, &[rows, inner])?;
    let mut out = flat.clone();
    for mut row in out.outer_iter_mut() {
        let mean = row.sum() / inner as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / inner as f32;
        let denom = (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) / denom);
    }
    let mut y = zip_map(&reshape(&out, x.shape())?, scale, |p, q| p * q)?;
    if let Some(b) = opt(inputs, 2) {
        y = zip_map(&y, b.f32()?, |p, q| p + q)?;
    }
    Ok(Tensor::F32(y))
}

fn reshape_tensor(t: &Tensor, shape: &[usize]) -> Result<Tensor> {
    Ok(match t {
        Tensor::F32(a) => Tensor::F32(reshape(a, shape)?),
        Tensor::I64(a) => Tensor::I64(reshape(a, shape)?),
        Tensor::Bool(a) => Tensor::Bool(reshape(a, shape)?),
    })
}

fn resolve_reshape(input: &[usize], spec: &[i64], allow_zero: bool) -> Result<Vec<usize>> {
    let total: usize = input.iter().product();
    let mut out = Vec::with_capacity(spec.len());
    let mut infer = None;
    for (i, &d) in spec.iter().enumerate() {
        match d {
            -1 if infer.is_none() => {
                infer = Some(i);
                out.push(1);
            }
            0 if !allow_zero => out.push(*input.get(i).ok_or_else(|| backend("Reshape copies a missing dim"))?),
            d if d >= 0 => out.push(d as usize),
            _ => return Err(backend(format!("invalid Reshape spec {spec:?}"))),
        }
    }
    if let Some(i) = infer {
        let known: usize = out
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &d)| d)
            .product();
        if known == 0 || !total.is_multiple_of(known) {
            return Err(backend(format!("cannot reshape {input:?} to {spec:?}")));
        }
        out[i] = total / known;
    }
    if out.iter().product::<usize>() != total {
        return Err(backend(format!("cannot reshape {input:?} to {spec:?}")));
    }
    Ok(out)
}

fn transpose(node: &NodeProto, t: &Tensor) -> Result<Tensor> {
    let rank = t.shape().len();
    let perm: Vec<usize> = match attr_ints(node, "perm") {
        Some(p) => p.iter().map(|&v| norm_axis(v, rank)).collect::<Result<_>>()?,
        None => (0..rank).rev().collect(),
    };
    if perm.len() != rank {
        return Err(backend("Transpose perm length differs from rank"));
    }
    Ok(match t {
        Tensor::F32(a) => Tensor::F32(a.clone().permuted_axes(IxDyn(&perm)).as_standard_layout().into_owned()),
        Tensor::I64(a) => Tensor::I64(a.clone().permuted_axes(IxDyn(&perm)).as_standard_layout().into_owned()),
        Tensor::Bool(a) => Tensor::Bool(a.clone().permuted_axes(IxDyn(&perm)).as_standard_layout().into_owned()),
    })
}

fn concat(node: &NodeProto, inputs: &Inputs) -> Result<Tensor> {
    let ts: Vec<&Tensor> = inputs.iter().flatten().copied().collect();
    let first = ts.first().ok_or_else(|| backend("Concat without inputs"))?;
    let axis = norm_axis(attr_i(node, "axis", 0), first.shape().len())?;
    let err = |e: ndarray::ShapeError| backend(format!("Concat: {e}"));
    Ok(match first {
        Tensor::F32(_) => {
            let v: Vec<_> = ts.iter().map(|t| t.f32().map(|a| a.view())).collect::<Result<_>>()?;
            Tensor::F32(concatenate(Axis(axis), &v).map_err(err)?)
        }
        Tensor::I64(_) => {
            let v: Vec<_> = ts.iter().map(|t| t.i64().map(|a| a.view())).collect::<Result<_>>()?;
            Tensor::I64(concatenate(Axis(axis), &v).map_err(err)?)
        }
        Tensor::Bool(_) => {
            let v: Vec<_> = ts.iter().map(|t| t.bool().map(|a| a.view())).collect::<Result<_>>()?;
            Tensor::Bool(concatenate(Axis(axis), &v).map_err(err)?)
        }
    })
}

fn gather(node: &NodeProto, data: &Tensor, indices: &Tensor) -> Result<Tensor> {
    let rank = data.shape().len();
    let axis = norm_axis(attr_i(node, "axis", 0), rank)?;
    let dim = data.shape()[axis] as i64;
    let idx: Vec<usize> = indices
        .to_i64_vec()?
        .into_iter()
        .map(|i| {
            let j = if i < 0 { i + dim } else { i };
            if (0..dim).contains(&j) {
                Ok(j as usize)
            } else {
                Err(backend(format!("Gather index {i} out of range for dim {dim}")))
            }
        })
        .collect::<Result<_>>()?;
    let mut shape: Vec<usize> = data.shape()[..axis].to_vec();
    shape.extend_from_slice(indices.shape());
    shape.extend_from_slice(&data.shape()[axis + 1..]);
    Ok(match data {
        Tensor::F32(a) => Tensor::F32(reshape(&a.select(Axis(axis), &idx), &shape)?),
        Tensor::I64(a) => Tensor::I64(reshape(&a.select(Axis(axis), &idx), &shape)?),
        Tensor::Bool(a) => Tensor::Bool(reshape(&a.select(Axis(axis), &idx), &shape)?),
    })
}

fn slice(node: &NodeProto, inputs: &Inputs, opset: i64) -> Result<Tensor> {
    let data = input(node, inputs, 0)?;
    let rank = data.shape().len();
    let (starts, ends, axes, steps) = if opset < 10 {
        (
            attr_ints(node, "starts").unwrap_or_default(),
            attr_ints(node, "ends").unwrap_or_default(),
            attr_ints(node, "axes"),
            None,
        )
    } else {
        (
            input(node, inputs, 1)?.to_i64_vec()?,
            input(node, inputs, 2)?.to_i64_vec()?,
            opt(inputs, 3).map(Tensor::to_i64_vec).transpose()?,
            opt(inputs, 4).map(Tensor::to_i64_vec).transpose()?,
        )
    };
    let axes = axes.unwrap_or_else(|| (0..starts.len() as i64).collect());
    let steps = steps.unwrap_or_else(|| vec![1; starts.len()]);
    if ends.len() != starts.len() || axes.len() != starts.len() || steps.len() != starts.len() {
        return Err(backend("Slice argument lengths differ"));
    }
    let mut out = data.clone();
    for i in 0..starts.len() {
        let ax = norm_axis(axes[i], rank)?;
        let dim = data.shape()[ax] as i64;
        let step = steps[i];
        if step == 0 {
            return Err(backend("Slice step 0"));
        }
        let fix = |v: i64| if v < 0 { v + dim } else { v };
        let (s, e) = (
            fix(starts[i].max(-dim - 1).min(dim)),
            fix(ends[i].max(-dim - 1).min(dim)),
        );
        let sl = if step > 0 {
            let s = s.clamp(0, dim);
            let e = e.clamp(0, dim).max(s);
            Slice::new(s as isize, Some(e as isize), step as isize)
        } else {
            let s = s.clamp(-1, dim - 1);
            let e = e.clamp(-1, dim - 1).min(s);
            Slice::new((e + 1) as isize, Some((s + 1) as isize), step as isize)
        };
        out = match &out {
            Tensor::F32(a) => Tensor::F32(a.slice_axis(Axis(ax), sl).to_owned()),
            Tensor::I64(a) => Tensor::I64(a.slice_axis(Axis(ax), sl).to_owned()),
            Tensor::Bool(a) => Tensor::Bool(a.slice_axis(Axis(ax), sl).to_owned()),
        };
    }
    Ok(out)
}

fn cast(node: &NodeProto, t: &Tensor) -> Result<Tensor> {
    let to = attr_i(node, "to", 0);
    Ok(match (to, t) {
        (1 | 11, Tensor::F32(a)) => Tensor::F32(a.clone()),
        (1 | 11, Tensor::I64(a)) => Tensor::F32(a.mapv(|v| v as f32)),
        (1 | 11, Tensor::Bool(a)) => Tensor::F32(a.mapv(|v| if v { 1.0 } else { 0.0 })),
        (6 | 7, Tensor::F32(a)) => Tensor::I64(a.mapv(|v| v as i64)),
        (6 | 7, Tensor::I64(a)) => Tensor::I64(a.clone()),
        (6 | 7, Tensor::Bool(a)) => Tensor::I64(a.mapv(i64::from)),
        (9, Tensor::F32(a)) => Tensor::Bool(a.mapv(|v| v != 0.0)),
        (9, Tensor::I64(a)) => Tensor::Bool(a.mapv(|v| v != 0)),
        (9, Tensor::Bool(a)) => Tensor::Bool(a.clone()),
        _ => return Err(backend(format!("Cast to element type {to} is not supported"))),
    })
}

fn where_op(c: &Tensor, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let c = c.bool()?;
    fn pick<T: Clone>(c: &ArrayD<bool>, x: &ArrayD<T>, y: &ArrayD<T>) -> Result<ArrayD<T>> {
        let shape = broadcast_shape(&broadcast_shape(c.shape(), x.shape())?, y.shape())?;
        let cb = c.broadcast(IxDyn(&shape)).ok_or_else(|| backend("Where broadcast"))?;
        let xb = x.broadcast(IxDyn(&shape)).ok_or_else(|| backend("Where broadcast"))?;
        let yb = y.broadcast(IxDyn(&shape)).ok_or_else(|| backend("Where broadcast"))?;
        Ok(ndarray::Zip::from(&cb)
            .and(&xb)
            .and(&yb)
            .map_collect(|&c, x, y| if c { x.clone() } else { y.clone() }))
    }
    Ok(match (x, y) {
        (Tensor::F32(a), Tensor::F32(b)) => Tensor::F32(pick(c, a, b)?),
        (Tensor::I64(a), Tensor::I64(b)) => Tensor::I64(pick(c, a, b)?),
        (Tensor::Bool(a), Tensor::Bool(b)) => Tensor::Bool(pick(c, a, b)?),
        _ => return Err(backend("Where branches differ in type")),
    })
}

fn expand(t: &Tensor, shape: &[i64]) -> Result<Tensor> {
    let target: Vec<usize> = shape.iter().map(|&d| d.max(0) as usize).collect();
    let out = broadcast_shape(t.shape(), &target)?;
    let b = |msg| backend(msg);
    Ok(match t {
        Tensor::F32(a) => Tensor::F32(a.broadcast(IxDyn(&out)).ok_or_else(|| b("Expand"))?.to_owned()),
        Tensor::I64(a) => Tensor::I64(a.broadcast(IxDyn(&out)).ok_or_else(|| b("Expand"))?.to_owned()),
        Tensor::Bool(a) => Tensor::Bool(a.broadcast(IxDyn(&out)).ok_or_else(|| b("Expand"))?.to_owned()),
    })
}

fn range(start: &Tensor, limit: &Tensor, delta: &Tensor) -> Result<Tensor> {
    match (start, limit, delta) {
        (Tensor::I64(s), Tensor::I64(l), Tensor::I64(d)) => {
            let (s, l, d) = (s.iter().next(), l.iter().next(), d.iter().next());
            let (Some(&s), Some(&l), Some(&d)) = (s, l, d) else {
                return Err(backend("Range needs scalars"));
            };
            if d == 0 {
                return Err(backend("Range delta 0"));
            }
            let n = ((l - s) as f64 / d as f64).ceil().max(0.0) as usize;
            let v: Vec<i64> = (0..n as i64).map(|i| s + i * d).collect();
            Ok(Tensor::I64(ArrayD::from_shape_vec(IxDyn(&[n]), v).expect("1-D")))
        }
        (Tensor::F32(s), Tensor::F32(l), Tensor::F32(d)) => {
            let (s, l, d) = (s.iter().next(), l.iter().next(), d.iter().next());
            let (Some(&s), Some(&l), Some(&d)) = (s, l, d) else {
                return Err(backend("Range needs scalars"));
            };
            if d == 0.0 {
                return Err(backend("Range delta 0"));
            }
            let n = ((l - s) / d).ceil().max(0.0) as usize;
            let v: Vec<f32> = (0..n).map(|i| s + i as f32 * d).collect();
            Ok(Tensor::F32(ArrayD::from_shape_vec(IxDyn(&[n]), v).expect("1-D")))
        }
        _ => Err(backend("Range arguments must share a type")),
    }
}

fn constant(node: &NodeProto) -> Result<Tensor> {
    let a = node
        .attributes
        .first()
        .ok_or_else(|| backend("Constant without value"))?;
    match a.name.as_str() {
        "value" => Tensor::from_proto(a.t.as_ref().ok_or_else(|| backend("Constant value is not a tensor"))?),
        "value_float" => Ok(Tensor::F32(ArrayD::from_elem(IxDyn(&[]), a.f.unwrap_or(0.0)))),
        "value_int" => Ok(Tensor::I64(ArrayD::from_elem(IxDyn(&[]), a.i.unwrap_or(0)))),
        "value_floats" => Ok(Tensor::F32(
            ArrayD::from_shape_vec(IxDyn(&[a.floats.len()]), a.floats.clone()).expect("1-D"),
        )),
        "value_ints" => Ok(Tensor::I64(
            ArrayD::from_shape_vec(IxDyn(&[a.ints.len()]), a.ints.clone()).expect("1-D"),
        )),
        other => Err(backend(format!("Constant attribute {other} is not supported"))),
    }
}

fn squeeze(node: &NodeProto, inputs: &Inputs) -> Result<Tensor> {
    let t = input(node, inputs, 0)?;
    let shape = t.shape();
    let axes: Vec<usize> = match axes_of(node, inputs, 1)? {
        Some(a) => a.iter().map(|&v| norm_axis(v, shape.len())).collect::<Result<_>>()?,
        None => (0..shape.len()).filter(|&i| shape[i] == 1).collect(),
    };
    let out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect();
    reshape_tensor(t, &out)
}

fn unsqueeze(node: &NodeProto, inputs: &Inputs) -> Result<Tensor> {
    let t = input(node, inputs, 0)?;
    let axes = axes_of(node, inputs, 1)?.ok_or_else(|| backend("Unsqueeze without axes"))?;
    let rank = t.shape().len() + axes.len();
    let mut axes: Vec<usize> = axes.iter().map(|&v| norm_axis(v, rank)).collect::<Result<_>>()?;
    axes.sort_unstable();
    let mut shape = t.shape().to_vec();
    for a in axes {
        shape.insert(a, 1);
    }
    reshape_tensor(t, &shape)
}

pub(crate) fn eval(node: &NodeProto, inputs: &Inputs, opset: i64) -> Result<Vec<Tensor>> {
    let op = node.op_type.as_str();
    let one = |t: Tensor| Ok(vec![t]);
    match op {
        "Add" | "Sub" | "Mul" | "Div" | "Pow" | "Max" | "Min" => {
            one(arith(node, input(node, inputs, 0)?, input(node, inputs, 1)?)?)
        }
        "Equal" | "Less" | "LessOrEqual" | "Greater" | "GreaterOrEqual" => {
            one(compare(node, input(node, inputs, 0)?, input(node, inputs, 1)?)?)
        }
        "And" | "Or" | "Xor" => one(logical(node, input(node, inputs, 0)?, input(node, inputs, 1)?)?),
        "Not" => one(Tensor::Bool(input(node, inputs, 0)?.bool()?.mapv(|v| !v))),
        "Sqrt" | "Erf" | "Relu" | "Tanh" | "Sigmoid" | "Exp" | "Log" | "Reciprocal" => {
            one(unary_f32(node, input(node, inputs, 0)?)?)
        }
        "Neg" => one(match input(node, inputs, 0)? {
            Tensor::F32(a) => Tensor::F32(a.mapv(|v| -v)),
            Tensor::I64(a) => Tensor::I64(a.mapv(|v| -v)),
            Tensor::Bool(_) => return Err(backend("Neg on bool")),
        }),
        "IsNaN" => one(Tensor::Bool(input(node, inputs, 0)?.f32()?.mapv(f32::is_nan))),
        "Identity" | "Dropout" => one(input(node, inputs, 0)?.clone()),
        "MatMul" => one(Tensor::F32(matmul(
            input(node, inputs, 0)?.f32()?,
            input(node, inputs, 1)?.f32()?,
        )?)),
        "Gemm" => one(gemm(node, inputs)?),
        "Softmax" => one(Tensor::F32(softmax(node, input(node, inputs, 0)?.f32()?, opset)?)),
        "ReduceMean" | "ReduceSum" | "ReduceMax" => one(reduce(node, inputs)?),
        "LayerNormalization" => one(layer_norm(node, inputs)?),
        "Reshape" => {
            let t = input(node, inputs, 0)?;
            let spec = input(node, inputs, 1)?.to_i64_vec()?;
            let shape = resolve_reshape(t.shape(), &spec, attr_i(node, "allowzero", 0) != 0)?;
            one(reshape_tensor(t, &shape)?)
        }
        "Flatten" => {
            let t = input(node, inputs, 0)?;
            let axis = attr_i(node, "axis", 1);
            let rank = t.shape().len() as i64;
            let axis = if axis < 0 { axis + rank } else { axis }.clamp(0, rank) as usize;
            let outer: usize = t.shape()[..axis].iter().product();
            let inner: usize = t.shape()[axis..].iter().product();
            one(reshape_tensor(t, &[outer, inner])?)
        }
        "Squeeze" => one(squeeze(node, inputs)?),
        "Unsqueeze" => one(unsqueeze(node, inputs)?),
        "Transpose" => one(transpose(node, input(node, inputs, 0)?)?),
        "Concat" => one(concat(node, inputs)?),
        "Gather" => one(gather(node, input(node, inputs, 0)?, input(node, inputs, 1)?)?),
        "Slice" => one(slice(node, inputs, opset)?),
        "Shape" => {
            let s = input(node, inputs, 0)?.shape();
            let r = s.len() as i64;
            let fix = |v: i64| (if v < 0 { v + r } else { v }).clamp(0, r) as usize;
            let start = fix(attr_i(node, "start", 0));
            let end = fix(attr_i(node, "end", r)).max(start);
            let v: Vec<i64> = s[start..end].iter().map(|&d| d as i64).collect();
            one(Tensor::I64(ArrayD::from_shape_vec(IxDyn(&[v.len()]), v).expect("1-D")))
        }
        "Size" => one(Tensor::I64(ArrayD::from_elem(
            IxDyn(&[]),
            input(node, inputs, 0)?.shape().iter().product::<usize>() as i64,
        ))),
        "Expand" => one(expand(input(node, inputs, 0)?, &input(node, inputs, 1)?.to_i64_vec()?)?),
        "Cast" => one(cast(node, input(node, inputs, 0)?)?),
        "Where" => one(where_op(
            input(node, inputs, 0)?,
            input(node, inputs, 1)?,
            input(node, inputs, 2)?,
        )?),
        "Range" => one(range(
            input(node, inputs, 0)?,
            input(node, inputs, 1)?,
            input(node, inputs, 2)?,
        )?),
        "ConstantOfShape" => {
            let shape: Vec<usize> = input(node, inputs, 0)?
                .to_i64_vec()?
                .iter()
                .map(|&d| d.max(0) as usize)
                .collect();
            let value = match node.attr("value").and_then(|a| a.t.as_ref()) {
                Some(t) => Tensor::from_proto(t)?,
                None => Tensor::F32(ArrayD::from_elem(IxDyn(&[1]), 0.0)),
            };
            one(match value {
                Tensor::F32(a) => Tensor::F32(ArrayD::from_elem(
                    IxDyn(&shape),
                    a.iter().next().copied().unwrap_or(0.0),
                )),
                Tensor::I64(a) => Tensor::I64(ArrayD::from_elem(IxDyn(&shape), a.iter().next().copied().unwrap_or(0))),
                Tensor::Bool(a) => Tensor::Bool(ArrayD::from_elem(
                    IxDyn(&shape),
                    a.iter().next().copied().unwrap_or(false),
                )),
            })
        }
        "Constant" => one(constant(node)?),
        other => Err(backend(format!("ONNX operator {other} is not supported"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onnx::proto::AttributeProto;

    fn node(op: &str, attrs: Vec<AttributeProto>) -> NodeProto {
        NodeProto {
            op_type: op.into(),
            attributes: attrs,
            ..NodeProto::default()
        }
    }

    fn f(shape: &[usize], v: Vec<f32>) -> Tensor {
        Tensor::F32(ArrayD::from_shape_vec(IxDyn(shape), v).unwrap())
    }

    fn i(v: Vec<i64>) -> Tensor {
        Tensor::I64(ArrayD::from_shape_vec(IxDyn(&[v.len()]), v).unwrap())
    }

    fn ints(name: &str, v: Vec<i64>) -> AttributeProto {
        AttributeProto {
            name: name.into(),
            ints: v,
            ..AttributeProto::default()
        }
    }

    fn int(name: &str, v: i64) -> AttributeProto {
        AttributeProto {
            name: name.into(),
            i: Some(v),
            ..AttributeProto::default()
        }
    }

    #[test]
    fn batched_matmul_matches_loops() {
        let a = f(&[2, 2, 3], (0..12).map(|x| x as f32).collect());
        let b = f(&[2, 3, 2], (0..12).map(|x| (x as f32) * 0.5).collect());
        let out = eval(&node("MatMul", vec![]), &[Some(&a), Some(&b)], 14).unwrap();
        let (a, b, c) = (a.f32().unwrap(), b.f32().unwrap(), out[0].f32().unwrap());
        for bi in 0..2 {
            for r in 0..2 {
                for col in 0..2 {
                    let want: f32 = (0..3).map(|k| a[[bi, r, k]] * b[[bi, k, col]]).sum();
                    assert_eq!(c[[bi, r, col]], want);
                }
            }
        }
        let w = f(&[3, 1], vec![1.0, 1.0, 1.0]);
        let folded = eval(&node("MatMul", vec![]), &[Some(&Tensor::F32(a.clone())), Some(&w)], 14).unwrap();
        assert_eq!(folded[0].shape(), &[2, 2, 1]);
        assert_eq!(folded[0].f32().unwrap()[[1, 1, 0]], 9.0 + 10.0 + 11.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = f(&[2, 3], vec![1.0, 2.0, 3.0, 0.0, 0.0, 1000.0]);
        let y = eval(&node("Softmax", vec![]), &[Some(&x)], 14).unwrap();
        for row in y[0].f32().unwrap().outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gather_scalar_and_matrix_indices() {
        let data = f(&[3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let scalar = Tensor::I64(ArrayD::from_elem(IxDyn(&[]), -1));
        let out = eval(&node("Gather", vec![]), &[Some(&data), Some(&scalar)], 14).unwrap();
        assert_eq!(out[0], f(&[2], vec![4.0, 5.0]));
        let idx = Tensor::I64(ArrayD::from_shape_vec(IxDyn(&[1, 2]), vec![2, 0]).unwrap());
        let out = eval(&node("Gather", vec![]), &[Some(&data), Some(&idx)], 14).unwrap();
        assert_eq!(out[0], f(&[1, 2, 2], vec![4.0, 5.0, 0.0, 1.0]));
    }

    #[test]
    fn reshape_and_slice_semantics() {
        let x = f(&[2, 3, 4], (0..24).map(|v| v as f32).collect());
        let r = eval(&node("Reshape", vec![]), &[Some(&x), Some(&i(vec![0, -1]))], 14).unwrap();
        assert_eq!(r[0].shape(), &[2, 12]);
        let s = eval(
            &node("Slice", vec![]),
            &[
                Some(&x),
                Some(&i(vec![1, -1])),
                Some(&i(vec![i64::MAX, 0])),
                Some(&i(vec![1, 2])),
                Some(&i(vec![1, -2])),
            ],
            14,
        )
        .unwrap();
        // axis 1 from 1 to end, axis 2 from 3 down to 1 step -2 -> [3, 1]
        assert_eq!(s[0].shape(), &[2, 2, 2]);
        assert_eq!(s[0].f32().unwrap()[[0, 0, 0]], 7.0);
        assert_eq!(s[0].f32().unwrap()[[0, 0, 1]], 5.0);
    }

    #[test]
    fn reduce_mean_keepdims_and_layer_norm_agree() {
        let x = f(&[2, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 6.0]);
        let m = eval(&node("ReduceMean", vec![ints("axes", vec![-1])]), &[Some(&x)], 14).unwrap();
        assert_eq!(m[0], f(&[2, 1], vec![2.5, 1.5]));
        let scale = f(&[4], vec![1.0; 4]);
        let y = eval(&node("LayerNormalization", vec![]), &[Some(&x), Some(&scale)], 17).unwrap();
        let row = y[0].f32().unwrap().index_axis(Axis(0), 0).to_owned();
        assert!(row.sum().abs() < 1e-5);
    }

    #[test]
    fn transpose_unsqueeze_where_range() {
        let x = f(&[2, 3], (0..6).map(|v| v as f32).collect());
        let t = eval(&node("Transpose", vec![ints("perm", vec![1, 0])]), &[Some(&x)], 14).unwrap();
        assert_eq!(t[0], f(&[3, 2], vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]));
        let u = eval(&node("Unsqueeze", vec![]), &[Some(&x), Some(&i(vec![0, 3]))], 14).unwrap();
        assert_eq!(u[0].shape(), &[1, 2, 3, 1]);
        let c = Tensor::Bool(ArrayD::from_shape_vec(IxDyn(&[3]), vec![true, false, true]).unwrap());
        let w = eval(
            &node("Where", vec![]),
            &[Some(&c), Some(&x), Some(&f(&[], vec![-1.0]))],
            14,
        )
        .unwrap();
        assert_eq!(w[0], f(&[2, 3], vec![0.0, -1.0, 2.0, 3.0, -1.0, 5.0]));
        let r = eval(
            &node("Range", vec![]),
            &[Some(&i(vec![0])), Some(&i(vec![5])), Some(&i(vec![2]))],
            14,
        )
        .unwrap();
        assert_eq!(r[0], i(vec![0, 2, 4]));
        let g = eval(&node("Gemm", vec![int("transB", 1)]), &[Some(&x), Some(&x)], 14).unwrap();
        assert_eq!(g[0].f32().unwrap()[[0, 1]], 0.0 * 3.0 + 1.0 * 4.0 + 2.0 * 5.0);
    }

    #[test]
    fn unknown_operator_is_named() {
        let e = eval(&node("Einsum", vec![]), &[], 14).unwrap_err();
        assert!(e.to_string().contains("Einsum"));
    }
}
