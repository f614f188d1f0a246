use super::{OpKind, Operator};
use crate::error::{Error, Result};
use crate::geometry::{decompose_transform, raster_execute};
use crate::kernels::{self, AlgorithmVariant, ConvGeometry, Workload};
use crate::tensor::{numel, Tensor};

/// Runs one atomic, raster or transform operator. Composite and control-flow
/// operators must be lowered or split first.
pub fn execute_op(op: &Operator, inputs: &[&Tensor], variant: AlgorithmVariant) -> Result<Vec<Tensor>> {
    let out = match &op.kind {
        OpKind::Unary(u) => kernels::unary(*u, inputs[0])?,
        OpKind::Binary(b) => kernels::binary(*b, inputs[0], inputs[1])?,
        OpKind::ReduceSum { axis } => kernels::reduce_sum(inputs[0], *axis)?,
        OpKind::MatMul => kernels::matmul(inputs[0], inputs[1], variant)?,
        OpKind::Conv2d { stride, pad } => kernels::conv2d(inputs[0], inputs[1], *stride, *pad, variant)?,
        OpKind::Raster(r) => raster_execute(r, inputs)?,
        OpKind::Transform(t) => {
            let shapes: Vec<Vec<usize>> = inputs.iter().map(|t| t.shape().to_vec()).collect();
            raster_execute(&decompose_transform(t, &shapes)?, inputs)?
        }
        OpKind::Composite(_) | OpKind::If { .. } | OpKind::While { .. } => {
            return Err(Error::Unsupported(format!(
                "operator {} ({}) cannot run as a single kernel",
                op.id,
                op.kind.name()
            )))
        }
    };
    Ok(vec![out])
}

/// Cost-model view of an operator with the given input shapes; `None` for
/// operators that are never costed directly.
pub fn op_workload(kind: &OpKind, inputs: &[Vec<usize>]) -> Result<Option<Workload>> {
    Ok(Some(match kind {
        OpKind::Unary(_) | OpKind::Binary(_) => Workload::Elementwise { n: numel(&inputs[0]) },
        OpKind::ReduceSum { .. } => Workload::ReduceSum { n: numel(&inputs[0]) },
        OpKind::MatMul => match (inputs[0].as_slice(), inputs[1].as_slice()) {
            (&[a, e], &[_, b]) => Workload::MatMul { a, e, b },
            _ => return Err(Error::Shape("matmul operands must be rank 2".into())),
        },
        OpKind::Conv2d { stride, pad } => {
            Workload::Conv2d(ConvGeometry::from_shapes(&inputs[0], &inputs[1], *stride, *pad)?)
        }
        OpKind::Raster(r) => Workload::Raster { moved: r.moved() },
        OpKind::Transform(t) => Workload::Raster { moved: decompose_transform(t, inputs)?.moved() },
        OpKind::Composite(_) | OpKind::If { .. } | OpKind::While { .. } => return Ok(None),
    }))
}
