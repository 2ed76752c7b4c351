"""Derivative bounds for transformers and the generalization bounds built on them."""
from __future__ import annotations

__version__ = "0.1.0"

from .combinatorics import FactorMode, LogMagnitude, bell, fdb_coeff, stirling2, touchard
from .multiindex import EnumerationCapError, enum_partitions, type_key
from .activations import ActivationKind, activation_bound
from .primitives import ArchSpec, BoundTable
from .composer import (GrowthClass, TransformerSpec, loss_constant, tblock_bound_level, tblock_bound_type,
                       transformer_bound, transformer_table)
from .genbound import GenBoundInput, assembled_bound, envelope, rate, transition_times

__all__ = [
    "__version__",
    "FactorMode",
    "LogMagnitude",
    "bell",
    "fdb_coeff",
    "stirling2",
    "touchard",
    "EnumerationCapError",
    "enum_partitions",
    "type_key",
    "ActivationKind",
    "activation_bound",
    "ArchSpec",
    "BoundTable",
    "GrowthClass",
    "TransformerSpec",
    "loss_constant",
    "tblock_bound_level",
    "tblock_bound_type",
    "transformer_bound",
    "transformer_table",
    "GenBoundInput",
    "assembled_bound",
    "envelope",
    "rate",
    "transition_times",
]
