"""Multi-task LSTM language models for n-best rescoring."""

from ._mtlm import (
    Model,
    MtlmError,
    Rwma,
    clamp_normalize,
    combined_score,
    default_lambda_grid,
    generate,
    intent_error_rate,
    pearson_rho,
    rwma_eta,
    slot_f1,
    wer,
    werr,
)

__all__ = [
    "Model",
    "MtlmError",
    "Rwma",
    "clamp_normalize",
    "combined_score",
    "default_lambda_grid",
    "generate",
    "intent_error_rate",
    "pearson_rho",
    "rwma_eta",
    "slot_f1",
    "wer",
    "werr",
]
