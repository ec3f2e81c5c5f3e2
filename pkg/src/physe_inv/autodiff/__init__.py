# Reverse-mode autodiff package
from .gradcheck import finite_difference_check
from .tensor import (
    GradientMap,
    Tape,
    Tensor,
    active_tape,
    as_tensor,
    backward,
    concat,
    cosine_similarity,
    dropout,
    forward_op,
    op_kinds,
)

__all__ = [
    'GradientMap', 'Tape', 'Tensor', 'active_tape', 'as_tensor', 'backward', 'concat',
    'cosine_similarity', 'dropout', 'finite_difference_check', 'forward_op', 'op_kinds',
]
