"""Intrinsic isometric embeddings of Euclidean polyhedra and their inverse limits."""
from .complex import (
    BaryPoint,
    ComplexError,
    DegenerateSimplexError,
    MetricComplex,
    ValidationReport,
    refinement,
    subdivide,
    validate_complex,
)
from .corrugation import (
    CorrugationError,
    DefectReport,
    EmbeddingResult,
    StretchConfig,
    embed_polyhedron,
    measure_defect,
    sawtooth_1d,
    stretch_round,
)
from .kernels import BACKEND
from .maps import (
    ComposeError,
    MapError,
    PLMap,
    ShortnessCertificate,
    compose,
    evaluate,
    injectivity_check,
    shortness_certificate,
    sup_displacement,
)
from .metric import DistanceEstimate, geodesic_graph, induced_distance, intrinsic_distance
from .prolimit import (
    InverseSystem,
    Schedule,
    Thread,
    delta,
    limit_distance,
    next_epsilon,
    run_limit_embedding,
    separated_pairs,
    separation_stage,
    validate_system,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DistanceEstimate",
    "geodesic_graph",
    "induced_distance",
    "intrinsic_distance",
    "BaryPoint",
    "ComplexError",
    "DegenerateSimplexError",
    "MetricComplex",
    "ValidationReport",
    "refinement",
    "subdivide",
    "validate_complex",
    "CorrugationError",
    "DefectReport",
    "EmbeddingResult",
    "StretchConfig",
    "embed_polyhedron",
    "measure_defect",
    "sawtooth_1d",
    "stretch_round",
    "ComposeError",
    "MapError",
    "PLMap",
    "ShortnessCertificate",
    "compose",
    "evaluate",
    "injectivity_check",
    "shortness_certificate",
    "sup_displacement",
    "InverseSystem",
    "Schedule",
    "Thread",
    "delta",
    "limit_distance",
    "next_epsilon",
    "run_limit_embedding",
    "separated_pairs",
    "separation_stage",
    "validate_system",
]
