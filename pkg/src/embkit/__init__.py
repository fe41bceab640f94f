"""Embedding-space toolkit: hypersphere sampling, domain-shift correction,
identity deduplication and face-verification metrics."""

from .domainshift import DomainShift, ShiftVector, apply_shift, estimate_shift
from .evalkit import (
    GroupStats,
    RocCurve,
    ScoreSet,
    VerificationPair,
    group_accuracy,
    kfold_accuracy,
    make_pairs,
    roc,
    score_pairs,
    tar_at_far,
)
from .exceptions import EmbkitError
from .hypersphere import (
    BetaParams,
    angle,
    cosine,
    normalize,
    prototype,
    sample_lambda,
    slerp,
)
from .identitybank import (
    IdentityRecord,
    PrototypeBank,
    SimilarityReport,
    build_bank,
    filter_top_k,
    score_identities,
)
from .sampler import (
    ClusterSpec,
    SamplePlan,
    SlerpSampler,
    execute_plan,
    gen_clusters,
    make_plan,
    make_sphere_clusters,
)

__version__ = "0.1.0"
