"""Deterministic SLERP sampling plans around identity prototypes."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix
from .exceptions import AntipodalPair, InvalidParameter
from .hypersphere import BetaParams, normalize_rows, sample_lambda, slerp_many
from .identitybank import IdentityRecord

MASK64 = (1 << 64) - 1

DEFAULT_IMAGES_PER_ID = 20
DEFAULT_SOURCES_PER_ID = 5
DEFAULT_DECODE_MULTIPLICITY = 5


def _mix64(z):
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(global_seed, label, index):
    """64-bit seed for one plan entry.

    The byte string ``seed_le64 || utf8(label) || index_le64`` is zero-padded
    to a multiple of 8 and folded 8 bytes at a time through the SplitMix64
    finalizer, starting from its length.
    """
    if not 0 <= global_seed <= MASK64:
        raise InvalidParameter(f"global_seed must be a 64-bit unsigned integer, got {global_seed!r}")
    if index < 0:
        raise InvalidParameter("index must be >= 0")
    data = global_seed.to_bytes(8, "little") + label.encode("utf-8") + index.to_bytes(8, "little")
    h = len(data)
    data += b"\0" * (-len(data) % 8)
    for off in range(0, len(data), 8):
        h = _mix64(h ^ int.from_bytes(data[off:off + 8], "little"))
    return h


@dataclass(frozen=True)
class PlanEntry:
    index: int
    direction: int
    lam: float
    seed: int


@dataclass(frozen=True)
class SamplePlan:
    label: str
    entries: tuple

    def __len__(self):
        return len(self.entries)

    @property
    def directions(self):
        return [e.direction for e in self.entries]

    @property
    def lambdas(self):
        return np.array([e.lam for e in self.entries])


def make_plan(record, k=DEFAULT_IMAGES_PER_ID, params=None, global_seed=0,
              max_sources=DEFAULT_SOURCES_PER_ID):
    """Plan ``k`` samples for one identity.

    Directions cycle over the first ``min(S, max_sources)`` sources; each
    lambda comes from its own generator seeded by
    :func:`derive_seed` ``(global_seed, label, j)``.
    """
    params = BetaParams() if params is None else params
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    if max_sources < 1:
        raise InvalidParameter(f"max_sources must be >= 1, got {max_sources}")
    n_dir = min(record.n_sources, max_sources)
    if n_dir < 1:
        raise InvalidParameter(f"identity {record.label!r} has no sources")
    entries = []
    for j in range(k):
        seed = derive_seed(global_seed, record.label, j)
        lam = sample_lambda(params, np.random.default_rng(seed))
        entries.append(PlanEntry(index=j, direction=j % n_dir, lam=lam, seed=seed))
    return SamplePlan(label=record.label, entries=tuple(entries))


def execute_plan(record, plan):
    """Interpolate from the prototype toward each planned source direction."""
    if plan.label != record.label:
        raise InvalidParameter(f"plan for {plan.label!r} applied to identity {record.label!r}")
    dirs = np.array(plan.directions, dtype=np.int64)
    if dirs.size and (dirs.min() < 0 or dirs.max() >= record.n_sources):
        bad = int(np.flatnonzero((dirs < 0) | (dirs >= record.n_sources))[0])
        raise InvalidParameter(f"identity {record.label!r}: direction out of range", row=bad)
    try:
        return slerp_many(record.prototype, record.sources[dirs], plan.lambdas)
    except AntipodalPair as exc:
        exc.message = f"identity {record.label!r} entry {exc.row}: {exc.message}"
        raise


def run_plans(bank, k=DEFAULT_IMAGES_PER_ID, params=None, global_seed=0,
              max_sources=DEFAULT_SOURCES_PER_ID, n_jobs=1):
    """Plan and execute every identity in ``bank``.

    Results are collected in (label, entry index) order whatever ``n_jobs``.
    """
    def work(record):
        plan = make_plan(record, k, params, global_seed, max_sources)
        return plan, execute_plan(record, plan)

    if n_jobs is None or n_jobs <= 1:
        results = [work(r) for r in bank]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, bank))
    results.sort(key=lambda pr: pr[0].label)
    plans = [p for p, _ in results]
    dim = bank[0].prototype.shape[0] if bank else 0
    X = np.vstack([v for _, v in results]) if results else np.empty((0, dim))
    return plans, X


def plan_rows(plans, decode_multiplicity=DEFAULT_DECODE_MULTIPLICITY):
    """Flatten plans into manifest rows (one per generated embedding)."""
    rows = []
    for plan in plans:
        for e in plan.entries:
            rows.append({
                "label": plan.label,
                "row": len(rows),
                "index": e.index,
                "direction": e.direction,
                "lambda": e.lam,
                "seed": e.seed,
                "decode_multiplicity": decode_multiplicity,
            })
    return rows


@dataclass(frozen=True)
class ClusterSpec:
    num_identities: int
    dim: int
    samples_per_id: int
    concentration: float
    seed: int = 0

    def __post_init__(self):
        for name in ("num_identities", "dim", "samples_per_id"):
            if getattr(self, name) < 1:
                raise InvalidParameter(f"{name} must be >= 1")
        if not (self.concentration > 0 and math.isfinite(self.concentration)):
            raise InvalidParameter("concentration must be a positive finite number")
        if not 0 <= self.seed <= MASK64:
            raise InvalidParameter("seed must be a 64-bit unsigned integer")


def cluster_labels(n):
    width = max(5, len(str(n - 1)))
    return [f"id{i:0{width}d}" for i in range(n)]


def make_sphere_clusters(n_identities=10, dim=64, samples_per_id=5, concentration=20.0,
                         seed=0):
    """Unit-norm clusters around random unit centers.

    Each sample is ``normalize(center + noise / concentration)`` with
    standard normal noise. Returns ``(X, y)`` with identity-major row order.
    """
    spec = ClusterSpec(n_identities, dim, samples_per_id, concentration, seed)
    rng = np.random.default_rng(spec.seed)
    centers = normalize_rows(rng.standard_normal((spec.num_identities, spec.dim)))
    noise = rng.standard_normal((spec.num_identities, spec.samples_per_id, spec.dim))
    X = centers[:, None, :] + noise / spec.concentration
    X = normalize_rows(X.reshape(-1, spec.dim))
    y = np.repeat(np.array(cluster_labels(spec.num_identities), dtype=object), spec.samples_per_id)
    return X, y


def gen_clusters(spec):
    """List of ``(label, vector)`` pairs for a :class:`ClusterSpec`."""
    X, y = make_sphere_clusters(spec.num_identities, spec.dim, spec.samples_per_id,
                                spec.concentration, spec.seed)
    return list(zip(y.tolist(), X))


class SlerpSampler(BaseEstimator):
    """Generate intra-class variations on the unit sphere.

    ``fit`` keeps the first ``sources_per_id`` rows of each identity,
    normalizes them and computes the identity prototype. ``sample`` then
    draws ``images_per_id`` points per identity on the arcs from the
    prototype toward the sources, with Beta-distributed arc fractions.

    Parameters
    ----------
    images_per_id : int, default=20
    alpha, beta : float, default=2.0
        Shape parameters of the arc-fraction distribution.
    sources_per_id : int, default=5
    random_state : int, default=0
        Global 64-bit seed; every plan entry derives its own seed from it.
    decode_multiplicity : int, default=5
        Carried into manifest rows for downstream decoders; not used here.
    n_jobs : int or None, default=None
    """

    def __init__(self, images_per_id=DEFAULT_IMAGES_PER_ID, alpha=2.0, beta=2.0,
                 sources_per_id=DEFAULT_SOURCES_PER_ID, random_state=0,
                 decode_multiplicity=DEFAULT_DECODE_MULTIPLICITY, n_jobs=None):
        self.images_per_id = images_per_id
        self.alpha = alpha
        self.beta = beta
        self.sources_per_id = sources_per_id
        self.random_state = random_state
        self.decode_multiplicity = decode_multiplicity
        self.n_jobs = n_jobs

    def _check_params(self):
        if self.images_per_id < 1:
            raise InvalidParameter("images_per_id must be >= 1")
        if self.sources_per_id < 1:
            raise InvalidParameter("sources_per_id must be >= 1")
        if not isinstance(self.random_state, (int, np.integer)):
            raise InvalidParameter("random_state must be an integer seed")
        return BetaParams(float(self.alpha), float(self.beta))

    def fit(self, X, y):
        self._check_params()
        X = as_matrix(X)
        y = [str(v) for v in np.asarray(y).reshape(-1)]
        if len(y) != X.shape[0]:
            raise InvalidParameter(f"{X.shape[0]} vectors but {len(y)} labels")
        groups = {}
        for label, row in zip(y, X):
            rows = groups.setdefault(label, [])
            if len(rows) < self.sources_per_id:
                rows.append(row)
        self.bank_ = [IdentityRecord.from_vectors(lbl, np.vstack(rows)) for lbl, rows in groups.items()]
        self.classes_ = np.array(list(groups), dtype=object)
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, labels=None):
        """Return ``(X_new, y_new)``; plans are kept in ``plans_``."""
        check_is_fitted(self, "bank_")
        params = self._check_params()
        bank = self.bank_
        if labels is not None:
            keep = set(labels)
            missing = keep.difference(r.label for r in bank)
            if missing:
                raise InvalidParameter(f"unknown identities: {sorted(missing)[:5]}")
            bank = [r for r in bank if r.label in keep]
        self.plans_, X_new = run_plans(bank, self.images_per_id, params, int(self.random_state),
                                       self.sources_per_id, self.n_jobs)
        y_new = np.array([p.label for p in self.plans_ for _ in p.entries], dtype=object)
        return X_new, y_new

    def fit_resample(self, X, y):
        return self.fit(X, y).sample()

    def manifest(self):
        check_is_fitted(self, "plans_")
        return plan_rows(self.plans_, self.decode_multiplicity)


__all__ = [
    "derive_seed",
    "PlanEntry",
    "SamplePlan",
    "make_plan",
    "execute_plan",
    "run_plans",
    "plan_rows",
    "ClusterSpec",
    "gen_clusters",
    "make_sphere_clusters",
    "SlerpSampler",
]
