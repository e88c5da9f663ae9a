"""Linear maps between face-embedding spaces and cross-system verification."""

from .errors import (
    DegenerateVectorError,
    EmbedMapError,
    FormatError,
    IncompatibleVersionError,
    NumericalError,
    ParseError,
    ProtocolError,
)
from .experiments import RankCurve, SensitivityCurve, rank_sweep, sensitivity_sweep
from .io import (
    read_embeddings,
    read_map,
    read_pairs,
    read_report,
    write_embeddings,
    write_map,
    write_pairs,
    write_report,
)
from .linalg import SvdDecomposition, ridge_fit, svd, truncate_rank, variance_explained
from .metrics import average_embeddings, cosine_distance, l2_normalize, mapped_distance
from .protocol import CrossMatrix, ScoredPair, accuracy_at, cross_matrix, evaluate, find_threshold
from .synthetic import emit_embeddings, generate_protocol, generate_world
from .types import (
    EmbeddingSet,
    EvalConfig,
    EvaluationReport,
    FoldResult,
    LinearMap,
    Pair,
    PairProtocol,
    SyntheticWorld,
    SystemSpec,
)

__version__ = "0.1.0"
