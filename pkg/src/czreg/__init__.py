"""Weighted pointwise regularity on sampled functions.

Boyd weights, local best polynomial approximation in L^p, jet extraction by
mollification, oscillation profiles and membership verdicts, one-dimensional
Whitney extension, and seeded experiments.
"""

__version__ = "0.1.0"

from .boyd import admissible, as_weight, dilation, fractional_band, indices, lil_weight, parse_weight
from .estimators import JetExtractor, PointwiseRegularity, WhitneyExtender
from .exceptions import CZRegError
from .jet_extract import extract_jet, make_kernel
from .lp_approx import BallSpec, PolyJet, best_poly
from .oscillation import batch_membership, profile
from .signals import SampledFunction, generate, load, load_csv, save, save_csv
from .whitney import JetField, extend, verify_bound

__all__ = [
    "__version__",
    "CZRegError",
    "parse_weight",
    "as_weight",
    "indices",
    "dilation",
    "admissible",
    "fractional_band",
    "lil_weight",
    "SampledFunction",
    "generate",
    "load",
    "save",
    "load_csv",
    "save_csv",
    "PolyJet",
    "BallSpec",
    "best_poly",
    "make_kernel",
    "extract_jet",
    "profile",
    "batch_membership",
    "JetField",
    "extend",
    "verify_bound",
    "PointwiseRegularity",
    "JetExtractor",
    "WhitneyExtender",
]
