"""Multimodal contrastive learning toolkit: weighted One-vs-Others
objectives, modality-gated LSTM fusion, and a sweep harness over synthetic
multimodal cohorts."""

from .autodiff import Parameter, Tensor, cosine_similarity, grad_check, softmax
from .errors import (ConfigurationError, ContractError, DegenerateInputError,
                     DimensionError, DivergenceError, DomainError)

__all__ = [
    "Parameter", "Tensor", "cosine_similarity", "grad_check", "softmax",
    "ConfigurationError", "ContractError", "DegenerateInputError",
    "DimensionError", "DivergenceError", "DomainError",
]

__version__ = "0.1.0"
