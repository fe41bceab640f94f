"""Verification metrics computed from pairwise similarity scores.

A pair is accepted when ``score >= threshold``. All operating points are
exact (no interpolation between thresholds).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import (
    EmbkitError,
    EmptyClass,
    EmptyFold,
    FoldCountMismatch,
    IndexOutOfRange,
    InsufficientImpostors,
    InvalidParameter,
    ZeroVector,
)
from .hypersphere import ZERO_NORM

DEFAULT_FOLDS = 10
DEFAULT_FAR = 1e-4


@dataclass(frozen=True)
class VerificationPair:
    a: int
    b: int
    genuine: bool
    group: Optional[str] = None
    fold: Optional[int] = None


@dataclass
class ScoreSet:
    """Scores with their genuine/impostor labels, groups and fold ids."""

    scores: np.ndarray
    is_genuine: np.ndarray
    groups: Optional[np.ndarray] = None
    folds: Optional[np.ndarray] = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.is_genuine = np.asarray(self.is_genuine, dtype=bool).reshape(-1)
        n = self.scores.shape[0]
        if self.is_genuine.shape[0] != n:
            raise InvalidParameter("scores and labels differ in length")
        if not np.all(np.isfinite(self.scores)):
            raise InvalidParameter("scores must be finite")
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=object).reshape(-1)
            if self.groups.shape[0] != n:
                raise InvalidParameter("groups and scores differ in length")
        if self.folds is not None:
            self.folds = np.asarray(self.folds, dtype=np.int64).reshape(-1)
            if self.folds.shape[0] != n:
                raise InvalidParameter("folds and scores differ in length")

    @classmethod
    def from_lists(cls, genuine, impostor):
        genuine = np.asarray(genuine, dtype=np.float64).reshape(-1)
        impostor = np.asarray(impostor, dtype=np.float64).reshape(-1)
        return cls(np.concatenate([genuine, impostor]),
                   np.concatenate([np.ones(genuine.size, bool), np.zeros(impostor.size, bool)]))

    def __len__(self):
        return self.scores.shape[0]

    @property
    def genuine(self):
        return self.scores[self.is_genuine]

    @property
    def impostor(self):
        return self.scores[~self.is_genuine]

    def subset(self, mask):
        return ScoreSet(self.scores[mask], self.is_genuine[mask],
                        None if self.groups is None else self.groups[mask],
                        None if self.folds is None else self.folds[mask])


def score_pairs(embeddings, pairs, block_size=65536):
    """Cosine similarity of every pair, packed into a :class:`ScoreSet`.

    Rows referenced by ``pairs`` are L2-normalized first.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    if E.ndim != 2:
        raise InvalidParameter("embeddings must be a 2-D matrix")
    n = E.shape[0]
    a = np.fromiter((p.a for p in pairs), dtype=np.int64, count=len(pairs))
    b = np.fromiter((p.b for p in pairs), dtype=np.int64, count=len(pairs))
    for idx, col in ((a, "a"), (b, "b")):
        bad = np.flatnonzero((idx < 0) | (idx >= n))
        if bad.size:
            raise IndexOutOfRange(f"pair column {col}={idx[bad[0]]} outside [0, {n})", row=int(bad[0]))

    used = np.unique(np.concatenate([a, b]))
    norms = np.zeros(n)
    norms[used] = np.sqrt(np.sum(E[used] * E[used], axis=1))
    bad = used[~(norms[used] > ZERO_NORM)]
    if bad.size:
        raise ZeroVector(f"embedding row {bad[0]} has zero norm", row=int(bad[0]))
    unit = np.zeros_like(E)
    unit[used] = E[used] / norms[used, None]

    scores = np.empty(len(pairs))
    for s in range(0, len(pairs), block_size):
        sl = slice(s, s + block_size)
        scores[sl] = np.sum(unit[a[sl]] * unit[b[sl]], axis=1)
    np.clip(scores, -1.0, 1.0, out=scores)

    labels = np.fromiter((p.genuine for p in pairs), dtype=bool, count=len(pairs))
    groups = None
    if pairs and any(p.group is not None for p in pairs):
        groups = np.array([p.group for p in pairs], dtype=object)
    folds = None
    if pairs and all(p.fold is not None for p in pairs):
        folds = np.array([p.fold for p in pairs], dtype=np.int64)
    return ScoreSet(scores, labels, groups, folds)


@dataclass(frozen=True)
class RocCurve:
    """Operating points ordered by descending threshold.

    The first point has threshold ``+inf`` (nothing accepted); the others
    sit at every distinct score, the last one accepting everything.
    """

    thresholds: np.ndarray
    far: np.ndarray
    tar: np.ndarray
    impostor_accepts: np.ndarray
    genuine_accepts: np.ndarray

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.far.tolist(), self.tar.tolist()))

    def __len__(self):
        return self.thresholds.shape[0]


def _check_classes(scores):
    n_gen = int(scores.is_genuine.sum())
    n_imp = len(scores) - n_gen
    if n_gen == 0 or n_imp == 0:
        raise EmptyClass(f"need genuine and impostor scores, got {n_gen} genuine, {n_imp} impostor")
    return n_gen, n_imp


def roc(scores):
    n_gen, n_imp = _check_classes(scores)
    g = np.sort(scores.genuine)
    i = np.sort(scores.impostor)
    thr = np.unique(scores.scores)[::-1]
    g_acc = n_gen - np.searchsorted(g, thr, side="left")
    i_acc = n_imp - np.searchsorted(i, thr, side="left")
    thr = np.concatenate([[np.inf], thr])
    g_acc = np.concatenate([[0], g_acc])
    i_acc = np.concatenate([[0], i_acc])
    return RocCurve(thresholds=thr, far=i_acc / n_imp, tar=g_acc / n_gen,
                    impostor_accepts=i_acc, genuine_accepts=g_acc)


def required_impostors(far_target):
    # guard against 1/f landing a hair above an integer
    return max(1, math.ceil(1.0 / far_target - 1e-9))


class TarAtFar(NamedTuple):
    tar: float
    threshold: float
    achieved_far: float


def tar_at_far(scores, far_target=DEFAULT_FAR, curve=None):
    """Highest TAR among ROC points with ``far <= far_target``.

    Among points with equal TAR the highest threshold wins. When even the
    strictest threshold exceeds the target the result is ``(0, inf, 0)``.
    """
    if not 0.0 < far_target < 1.0:
        raise InvalidParameter(f"far_target must lie in (0, 1), got {far_target!r}")
    _, n_imp = _check_classes(scores)
    need = required_impostors(far_target)
    if n_imp < need:
        raise InsufficientImpostors(
            f"FAR {far_target:g} needs at least {need} impostor scores, got {n_imp}", required=need)
    curve = roc(scores) if curve is None else curve
    ok = np.flatnonzero(curve.far <= far_target)
    best = ok[np.argmax(curve.tar[ok])]
    return TarAtFar(float(curve.tar[best]), float(curve.thresholds[best]), float(curve.far[best]))


def _fold_ids(scores, folds):
    if not isinstance(folds, (int, np.integer)) or folds < 2:
        raise InvalidParameter(f"folds must be an integer >= 2, got {folds!r}")
    n = len(scores)
    if scores.folds is None:
        if n < folds:
            raise EmptyFold(f"{n} pairs cannot fill {folds} folds")
        ids = np.empty(n, dtype=np.int64)
        for f, block in enumerate(np.array_split(np.arange(n), folds)):
            ids[block] = f
        return ids
    ids = scores.folds
    present = np.unique(ids)
    if present.size and (present.min() < 0 or present.max() >= folds):
        raise FoldCountMismatch(f"fold ids span {present.min()}..{present.max()}, expected 0..{folds - 1}")
    missing = sorted(set(range(folds)) - set(present.tolist()))
    if missing:
        raise EmptyFold(f"fold {missing[0]} has no pairs")
    return ids


def best_threshold(scores, is_genuine):
    """Training-set threshold maximizing accuracy; ties go to the smallest."""
    cand = np.unique(scores)
    g = np.sort(scores[is_genuine])
    i = np.sort(scores[~is_genuine])
    correct = (g.size - np.searchsorted(g, cand, side="left")) + np.searchsorted(i, cand, side="left")
    return float(cand[int(np.argmax(correct))])


def accuracy_at(scores, is_genuine, threshold):
    accepted = scores >= threshold
    return int(np.count_nonzero(accepted == is_genuine)) / scores.shape[0]


class KFoldResult(NamedTuple):
    mean_accuracy: float
    per_fold: list
    thresholds: list


def kfold_accuracy(scores, folds=DEFAULT_FOLDS):
    """Cross-validated verification accuracy.

    For each fold the threshold is tuned on the remaining folds over all of
    their distinct scores, then applied to the held-out fold.
    """
    ids = _fold_ids(scores, folds)
    per_fold, thresholds = [], []
    for f in range(folds):
        test = ids == f
        train = ~test
        if not train.any():
            raise EmptyFold(f"no training pairs outside fold {f}")
        t = best_threshold(scores.scores[train], scores.is_genuine[train])
        thresholds.append(t)
        per_fold.append(accuracy_at(scores.scores[test], scores.is_genuine[test], t))
    return KFoldResult(sum(per_fold) / folds, per_fold, thresholds)


@dataclass(frozen=True)
class GroupStats:
    per_group: dict
    mean: float
    std: float


def group_stats(per_group):
    values = list(per_group.values())
    mean = sum(values) / len(values)
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    return GroupStats(dict(per_group), mean, std)


def group_accuracy(scores, folds=DEFAULT_FOLDS):
    """Per-group k-fold accuracy with the mean and population std across groups."""
    if scores.groups is None or any(g is None for g in scores.groups):
        raise InvalidParameter("every pair needs a group")
    per_group = {}
    for name in sorted(set(scores.groups.tolist())):
        try:
            per_group[name] = kfold_accuracy(scores.subset(scores.groups == name), folds).mean_accuracy
        except EmbkitError as exc:
            exc.message = f"group {name!r}: {exc.message}"
            raise
    return group_stats(per_group)


def make_pairs(labels, n_genuine, n_impostor, folds=DEFAULT_FOLDS, seed=0):
    """Random genuine/impostor pairs over row ``labels``, split into folds.

    Pairs are shuffled and then cut into contiguous, near-equal folds.
    """
    labels = [str(v) for v in labels]
    by_label = {}
    for row, lbl in enumerate(labels):
        by_label.setdefault(lbl, []).append(row)
    names = list(by_label)
    multi = [n for n in names if len(by_label[n]) >= 2]
    if n_genuine and not multi:
        raise EmptyClass("no identity has two rows; cannot form genuine pairs")
    if n_impostor and len(names) < 2:
        raise EmptyClass("need two identities to form impostor pairs")
    rng = np.random.default_rng(seed)
    raw = []
    for _ in range(n_genuine):
        rows = by_label[multi[rng.integers(len(multi))]]
        a, b = rng.choice(len(rows), size=2, replace=False)
        raw.append((rows[a], rows[b], True))
    for _ in range(n_impostor):
        x, y = rng.choice(len(names), size=2, replace=False)
        ra, rb = by_label[names[x]], by_label[names[y]]
        raw.append((ra[rng.integers(len(ra))], rb[rng.integers(len(rb))], False))
    order = rng.permutation(len(raw))
    pairs = []
    fold_of = np.empty(len(raw), dtype=np.int64)
    for f, block in enumerate(np.array_split(np.arange(len(raw)), folds)):
        fold_of[block] = f
    for pos, k in enumerate(order):
        a, b, gen = raw[k]
        pairs.append(VerificationPair(int(a), int(b), gen, None, int(fold_of[pos])))
    return pairs


__all__ = [
    "VerificationPair",
    "ScoreSet",
    "score_pairs",
    "RocCurve",
    "roc",
    "TarAtFar",
    "tar_at_far",
    "required_impostors",
    "best_threshold",
    "KFoldResult",
    "kfold_accuracy",
    "GroupStats",
    "group_stats",
    "group_accuracy",
    "make_pairs",
]
