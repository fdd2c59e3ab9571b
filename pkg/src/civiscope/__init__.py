"""civiscope: incivility measurement and information-flow analysis for social-media corpora.

The toolkit ingests an annotated corpus (accounts, posts, follows, survey
panel), identifies political influencers, trains per-dimension incivility
classifiers on supplied embeddings, and analyzes temporal dynamics,
disseminators/audiences, and retweet-network flow motifs. Everything is
seeded and file-driven so that a full run is reproducible byte for byte.
"""

from civiscope.model import (
    Account,
    AccountType,
    Dataset,
    Dimension,
    FollowEdge,
    Identity,
    Post,
    SurveyUser,
    ValidationError,
    ConvergenceError,
)

__version__ = "0.1.0"

__all__ = [
    "Account",
    "AccountType",
    "Dataset",
    "Dimension",
    "FollowEdge",
    "Identity",
    "Post",
    "SurveyUser",
    "ValidationError",
    "ConvergenceError",
    "__version__",
]
