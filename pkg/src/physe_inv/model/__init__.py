# Model package
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .network import (
    BETA_RAW_LIMIT,
    ForwardResult,
    SequenceModel,
    SurjectiveParams,
    attend,
    baseline_forward,
    bilstm_encode,
    decode,
    encode,
    estimate_params,
    invert_surjective,
    lstm_layer,
    physics_encode,
    predict_direct,
    transform_raw,
)
from .params import MODEL_KINDS, Architecture, ModelParams, init_params

__all__ = [
    'BETA_RAW_LIMIT', 'MODEL_KINDS', 'Architecture', 'Checkpoint', 'ForwardResult', 'ModelParams',
    'SequenceModel', 'SurjectiveParams', 'attend', 'baseline_forward', 'bilstm_encode', 'decode', 'encode',
    'estimate_params', 'init_params', 'invert_surjective', 'load_checkpoint', 'lstm_layer', 'physics_encode',
    'predict_direct', 'save_checkpoint', 'transform_raw',
]
