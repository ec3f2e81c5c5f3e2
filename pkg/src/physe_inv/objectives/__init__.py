# Objectives package
from .losses import (
    CL_VARIANTS,
    LossWeights,
    contrastive_loss,
    mse_loss,
    nt_xent_loss,
    pe_loss,
    stability_regularizer,
    total_loss,
)

__all__ = [
    'CL_VARIANTS', 'LossWeights', 'contrastive_loss', 'mse_loss', 'nt_xent_loss', 'pe_loss',
    'stability_regularizer', 'total_loss',
]
