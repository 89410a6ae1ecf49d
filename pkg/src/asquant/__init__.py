"""Quantification of anterior-segment OCT label masks."""

from .core import LabelMask, ParamSet, ScanMeta, SpurPair, read_mask, write_mask
from .params import QuantifyConfig, quantify_scan
from .qc import QCPolicy, assess

__version__ = "0.1.0"

__all__ = [
    "LabelMask",
    "ParamSet",
    "QCPolicy",
    "QuantifyConfig",
    "ScanMeta",
    "SpurPair",
    "assess",
    "quantify_scan",
    "read_mask",
    "write_mask",
]
