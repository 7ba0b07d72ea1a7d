"""Event logs, intensity/recency features and ground-truth rankings.

An event log holds ``(user, group, category, timestamp)`` tuples, with
groups ``pv`` (page views), ``sq`` (search queries), ``slc`` (search link
clicks), ``olc`` (sponsored link clicks), ``adv`` (ad views) and ``adc``
(ad clicks). Features are computed at ``T_features`` from the first four
groups (plus ``adv`` optionally) and the rankings from ``adc`` events in
``(T_features, T_labels]``.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Iterable, Mapping, TextIO

import numpy as np
import scipy.sparse as sp

from .core import Ranking, RankedDataset

GROUPS = ("pv", "sq", "slc", "olc", "adv", "adc")
FEATURE_GROUPS = ("pv", "sq", "slc", "olc")
KINDS = ("intensity", "recency")
AGE_BUCKETS = ("13-17", "18-20", "21-24", "25-29", "30-34", "35-44", "45-54", "55-64", "65+")
GENDERS = ("male", "female")
_GROUP_CODE = {g: i for i, g in enumerate(GROUPS)}


@dataclass(frozen=True, eq=False)
class EventLog:
    """Columnar event tuples; ``group`` holds indices into :data:`GROUPS`."""

    user: np.ndarray
    group: np.ndarray
    category: np.ndarray
    timestamp: np.ndarray
    n_categories: int

    def __post_init__(self):
        cols = [np.asarray(self.user, dtype=np.int64), np.asarray(self.group, dtype=np.int8),
                np.asarray(self.category, dtype=np.int64),
                np.asarray(self.timestamp, dtype=np.int64)]
        if len({c.shape for c in cols}) != 1 or cols[0].ndim != 1:
            raise ValueError("event columns must be 1-d and equally long")
        if cols[1].size and (cols[1].min() < 0 or cols[1].max() >= len(GROUPS)):
            raise ValueError("unknown event group")
        if cols[2].size and (cols[2].min() < 1 or cols[2].max() > self.n_categories):
            raise ValueError(f"event category outside 1..{self.n_categories}")
        for name, col in zip(("user", "group", "category", "timestamp"), cols):
            object.__setattr__(self, name, col)

    def __len__(self) -> int:
        return int(self.user.size)

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.n_categories == other.n_categories and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("user", "group", "category", "timestamp"))

    __hash__ = None

    def select(self, mask: np.ndarray) -> EventLog:
        return EventLog(self.user[mask], self.group[mask], self.category[mask],
                        self.timestamp[mask], self.n_categories)

    def users(self) -> np.ndarray:
        return np.unique(self.user)


# demographics: user id -> (age bucket 0..8, gender 0..1)
Demographics = Mapping[int, tuple[int, int]]


@dataclass(frozen=True)
class FeatureLayout:
    """Index map of the user feature vector.

    Index ``(g * 2 + kind) * L + (c - 1)`` (0-based) holds the intensity
    (kind 0) or recency (kind 1) of category ``c`` in the ``g``-th feature
    group; the 9 age and 2 gender one-hots follow.
    """

    L: int
    include_adv: bool = False

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("need at least one category")

    @property
    def groups(self) -> tuple[str, ...]:
        return FEATURE_GROUPS + (("adv",) if self.include_adv else ())

    @property
    def d(self) -> int:
        return 2 * len(self.groups) * self.L + len(AGE_BUCKETS) + len(GENDERS)

    def index(self, group: str, kind: str, category: int) -> int:
        g = self.groups.index(group)
        if not 1 <= category <= self.L:
            raise ValueError(f"category {category} out of range")
        return (2 * g + KINDS.index(kind)) * self.L + category - 1

    def age_index(self, bucket: int) -> int:
        return 2 * len(self.groups) * self.L + bucket

    def gender_index(self, gender: int) -> int:
        return 2 * len(self.groups) * self.L + len(AGE_BUCKETS) + gender

    def decode(self, index: int) -> tuple:
        """Inverse of the index map: ``(group, kind, category)``,
        ``("age", bucket)`` or ``("gender", g)``."""
        if not 0 <= index < self.d:
            raise ValueError(f"index {index} out of range")
        block, c = divmod(index, self.L)
        n_blocks = 2 * len(self.groups)
        if block < n_blocks:
            g, kind = divmod(block, 2)
            return self.groups[g], KINDS[kind], c + 1
        rest = index - n_blocks * self.L
        if rest < len(AGE_BUCKETS):
            return "age", rest
        return "gender", rest - len(AGE_BUCKETS)

    @classmethod
    def from_dims(cls, L: int, d: int) -> FeatureLayout:
        for adv in (False, True):
            lay = cls(L, adv)
            if lay.d == d:
                return lay
        raise ValueError(f"d={d} matches no feature layout for L={L}")


def intensity(timestamps, t: float, alpha: float) -> float:
    """Exponentially time-decayed event count ``sum alpha^(t - t_i)``."""
    ts = np.asarray(timestamps, dtype=np.float64)
    _check_decay(alpha)
    if np.any(ts > t):
        raise ValueError("events after the evaluation time")
    return float(np.sum(alpha ** (t - ts)))


def recency(timestamps, t: float) -> float:
    """Time since the most recent event (``inf`` when there is none)."""
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.size == 0:
        return float("inf")
    if np.any(ts > t):
        raise ValueError("events after the evaluation time")
    return float(np.min(t - ts))


def recency_feature(timestamps, t: float, alpha: float) -> float:
    """``alpha ** recency``: 1 for an event at ``t``, 0 when there is none."""
    _check_decay(alpha)
    r = recency(timestamps, t)
    return 0.0 if np.isinf(r) else float(alpha ** r)


def _check_decay(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _cell_reduce(cells: np.ndarray, ts: np.ndarray, t: float, alpha: float):
    """Per distinct cell id: decayed count and most recent timestamp."""
    if cells.size == 0:
        return cells, np.zeros(0), ts
    order = np.lexsort((ts, cells))
    cells, ts = cells[order], ts[order]
    starts = np.flatnonzero(np.r_[True, cells[1:] != cells[:-1]])
    ends = np.r_[starts[1:], cells.size] - 1
    weights = alpha ** (t - ts.astype(np.float64))
    return cells[starts], np.add.reduceat(weights, starts), ts[ends]


def featurize(log: EventLog, demographics: Demographics, t_features: int,
              layout: FeatureLayout, alpha: float = 0.98,
              users: Iterable[int] | None = None) -> tuple[np.ndarray, sp.csr_matrix]:
    """Feature rows at ``t_features`` for every user, ordered by user id.

    Returns ``(user_ids, X)`` with ``X`` of shape ``(n_users, layout.d)``
    (0-based columns). Users default to everyone in the log or the
    demographics table. Users without demographics get no one-hots.
    """
    _check_decay(alpha)
    if log.n_categories != layout.L:
        raise ValueError(f"log has L={log.n_categories}, layout has L={layout.L}")
    if users is None:
        users = np.union1d(log.users(), np.fromiter(demographics.keys(), dtype=np.int64))
    users = np.unique(np.asarray(list(users), dtype=np.int64))
    codes = np.array([_GROUP_CODE[g] for g in layout.groups])
    slot_of_code = np.full(len(GROUPS), -1, dtype=np.int64)
    slot_of_code[codes] = np.arange(codes.size)
    keep = (log.timestamp <= t_features) & (slot_of_code[log.group] >= 0)
    keep &= np.isin(log.user, users)
    ev = log.select(keep)
    row = np.searchsorted(users, ev.user)
    slot = slot_of_code[ev.group]
    L, G = layout.L, len(layout.groups)
    cells = (row * G + slot) * L + (ev.category - 1)
    cell_ids, inten, latest = _cell_reduce(cells, ev.timestamp, t_features, alpha)
    r, rem = np.divmod(cell_ids, G * L)
    g, c = np.divmod(rem, L)
    rec = alpha ** (t_features - latest.astype(np.float64))
    rows = [r, r]
    cols = [(2 * g) * L + c, (2 * g + 1) * L + c]
    vals = [inten, rec]
    demo_rows, demo_cols = [], []
    for i, u in enumerate(users):
        demo = demographics.get(int(u))
        if demo is None:
            continue
        age, gender = demo
        demo_rows += [i, i]
        demo_cols += [layout.age_index(age), layout.gender_index(gender)]
    rows.append(np.array(demo_rows, dtype=np.int64))
    cols.append(np.array(demo_cols, dtype=np.int64))
    vals.append(np.ones(len(demo_rows)))
    X = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(users.size, layout.d))
    X.eliminate_zeros()
    X.sort_indices()
    return users, X


def build_labels(log: EventLog, t_features: int, t_labels: int, alpha: float = 0.98,
                 min_categories: int = 3) -> dict[int, Ranking]:
    """Per user, categories ranked by ``adc`` intensity over ``(t_features, t_labels]``.

    Intensity ties go to the lower category id. Users with fewer than
    ``min_categories`` clicked categories are dropped.
    """
    if not t_features < t_labels:
        raise ValueError("t_features must precede t_labels")
    _check_decay(alpha)
    mask = ((log.group == _GROUP_CODE["adc"]) & (log.timestamp > t_features)
            & (log.timestamp <= t_labels))
    ev = log.select(mask)
    if len(ev) == 0:
        return {}
    L = log.n_categories
    cells = ev.user * L + (ev.category - 1)
    cell_ids, inten, _ = _cell_reduce(cells, ev.timestamp, t_labels, alpha)
    user, cat = np.divmod(cell_ids, L)
    order = np.lexsort((cat, -inten, user))
    user, cat = user[order], cat[order] + 1
    bounds = np.flatnonzero(np.r_[True, user[1:] != user[:-1], True])
    out: dict[int, Ranking] = {}
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - lo >= min_categories:
            out[int(user[lo])] = tuple(int(c) for c in cat[lo:hi])
    return out


def build_dataset(log: EventLog, demographics: Demographics, t_features: int,
                  t_labels: int, include_adv: bool = False, alpha: float = 0.98,
                  min_categories: int = 3) -> tuple[np.ndarray, RankedDataset]:
    """Featurize and label in one go; keeps only users with a ranking."""
    labels = build_labels(log, t_features, t_labels, alpha, min_categories)
    layout = FeatureLayout(log.n_categories, include_adv)
    users = np.array(sorted(labels), dtype=np.int64)
    users, X = featurize(log, demographics, t_features, layout, alpha, users=users)
    return users, RankedDataset(X, [labels[int(u)] for u in users], layout.L, layout.d)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    """Synthetic ad-event corpus.

    Users belong to one of ``n_prototypes`` latent clusters. A cluster is
    coded by bits; each bit picks which block of categories its users
    browse, and the cluster's click preferences combine a global
    popularity, additive per-bit effects and an effect of the bit parity.
    The parity part is invisible to any model linear in the features.
    Clicks come in sessions whose size depends on the category.
    ``noise`` is a sampling temperature: large values flatten every
    category distribution towards uniform.
    """

    n_users: int = 10_000
    L: int = 10
    alpha: float = 0.98
    horizon: int = 120
    n_prototypes: int = 4
    noise: float = 1.0
    seed: int = 0
    browse_rate: float = 12.0
    view_rate: float = 12.0
    session_rate: float = 24.0
    burst: float = 1.0
    popularity_scale: float = 0.6
    additive_scale: float = 0.5
    parity_scale: float = 1.5
    browse_strength: float = 2.5
    demographic_skew: float = 0.4

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_users < 1 or self.L < 1 or self.n_prototypes < 1:
            raise ValueError("n_users, L and n_prototypes must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.noise > 0:
            raise ValueError("noise must be > 0")
        if not 0 <= self.demographic_skew <= 1:
            raise ValueError("demographic_skew must lie in [0, 1]")
        if 2 * _n_bits(self.n_prototypes) > self.L:
            raise ValueError("too few categories for the prototype code")

    def as_dict(self) -> dict:
        return asdict(self)


def _n_bits(n_prototypes: int) -> int:
    return int(np.ceil(np.log2(n_prototypes))) if n_prototypes > 1 else 0


def _softmax(logits: np.ndarray, temperature: float) -> np.ndarray:
    z = logits / temperature
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def _sample_categories(rng, probs: np.ndarray, owner: np.ndarray) -> np.ndarray:
    """One category (1-based) per event from row ``owner[e]`` of ``probs``."""
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(owner.size)
    out = np.empty(owner.size, dtype=np.int64)
    for p in range(probs.shape[0]):
        sel = owner == p
        out[sel] = np.searchsorted(cdf[p], u[sel], side="right") + 1
    return np.minimum(out, probs.shape[1])


def prototype_preferences(cfg: SyntheticConfig, rng=None):
    """Per-prototype browse and click logits, and per-category burst sizes."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    P, L = cfg.n_prototypes, cfg.L
    n_bits = _n_bits(P)
    bits = (np.arange(P)[:, None] >> np.arange(n_bits)[None, :]) & 1
    signs = 2.0 * bits - 1.0
    parity = 2.0 * (bits.sum(axis=1) % 2) - 1.0 if n_bits else np.zeros(P)
    blocks = np.array_split(rng.permutation(L), 2 * n_bits) if n_bits else []
    browse = np.zeros((P, L))
    for p in range(P):
        for b in range(n_bits):
            browse[p, blocks[2 * b + bits[p, b]]] += cfg.browse_strength
    popularity = cfg.popularity_scale * rng.standard_normal(L)
    additive = cfg.additive_scale * rng.standard_normal((n_bits, L))
    interaction = cfg.parity_scale * rng.standard_normal(L)
    clicks = popularity[None, :] + signs @ additive + parity[:, None] * interaction[None, :]
    burst_shape = rng.standard_normal(L)
    return browse, clicks, burst_shape, bits


def generate_synthetic(cfg: SyntheticConfig) -> tuple[EventLog, dict[int, tuple[int, int]]]:
    """Seeded synthetic event log and demographics table (user ids 1..n)."""
    rng = np.random.default_rng(cfg.seed)
    browse, clicks, burst_shape, bits = prototype_preferences(cfg, rng)
    P, L, n = cfg.n_prototypes, cfg.L, cfg.n_users
    proto = rng.integers(0, P, size=n)
    users = np.arange(1, n + 1)

    # demographics: gender leans on bit 0, age on bit 1, otherwise uniform
    gender = rng.integers(0, 2, size=n)
    age = rng.integers(0, len(AGE_BUCKETS), size=n)
    n_bits = bits.shape[1]
    if n_bits >= 1:
        skew = rng.random(n) < cfg.demographic_skew
        gender = np.where(skew, bits[proto, 0], gender)
    if n_bits >= 2:
        skew = rng.random(n) < cfg.demographic_skew
        young = rng.integers(0, 4, size=n)
        old = rng.integers(5, len(AGE_BUCKETS), size=n)
        age = np.where(skew, np.where(bits[proto, 1] == 1, old, young), age)
    demographics = {int(u): (int(a), int(g)) for u, a, g in zip(users, age, gender)}

    cols = {"user": [], "group": [], "category": [], "timestamp": []}

    def emit(owner_user, group, cats, ts):
        cols["user"].append(owner_user)
        cols["group"].append(np.full(owner_user.size, _GROUP_CODE[group], dtype=np.int8))
        cols["category"].append(cats)
        cols["timestamp"].append(ts)

    browse_probs = _softmax(browse, cfg.noise)
    click_probs = _softmax(clicks, cfg.noise)
    view_probs = _softmax(0.5 * clicks + 0.5 * browse, cfg.noise)
    for group in FEATURE_GROUPS:
        counts = rng.poisson(cfg.browse_rate, size=n)
        owner = np.repeat(np.arange(n), counts)
        emit(users[owner], group, _sample_categories(rng, browse_probs, proto[owner]),
             rng.integers(0, cfg.horizon + 1, size=owner.size))
    counts = rng.poisson(cfg.view_rate, size=n)
    owner = np.repeat(np.arange(n), counts)
    emit(users[owner], "adv", _sample_categories(rng, view_probs, proto[owner]),
         rng.integers(0, cfg.horizon + 1, size=owner.size))

    # ad clicks arrive in sessions; extra clicks per session depend on the category
    counts = rng.poisson(cfg.session_rate, size=n)
    owner = np.repeat(np.arange(n), counts)
    cats = _sample_categories(rng, click_probs, proto[owner])
    start = rng.integers(0, cfg.horizon + 1, size=owner.size)
    extra_mean = cfg.burst * np.exp(burst_shape / cfg.noise)
    extra = rng.poisson(extra_mean[cats - 1])
    rep = np.repeat(np.arange(owner.size), 1 + extra)
    offset = rng.integers(0, 3, size=rep.size)
    first = np.r_[True, rep[1:] != rep[:-1]]
    offset[first] = 0
    emit(users[owner[rep]], "adc", cats[rep], np.minimum(start[rep] + offset, cfg.horizon))

    log = EventLog(*(np.concatenate(cols[k]) for k in ("user", "group", "category",
                                                       "timestamp")), n_categories=L)
    order = np.lexsort((log.category, log.group, log.timestamp, log.user))
    return log.select(order), demographics


# ---------------------------------------------------------------------------
# TSV files
# ---------------------------------------------------------------------------

def write_events(log: EventLog, stream: TextIO) -> None:
    names = np.array(GROUPS)[log.group]
    for u, g, c, t in zip(log.user.tolist(), names.tolist(), log.category.tolist(),
                          log.timestamp.tolist()):
        stream.write(f"{u}\t{g}\t{c}\t{t}\n")


def read_events(stream: TextIO, n_categories: int | None = None) -> EventLog:
    users, groups, cats, ts = [], [], [], []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 tab-separated fields")
        if parts[1] not in _GROUP_CODE:
            raise ValueError(f"line {lineno}: unknown event group {parts[1]!r}")
        try:
            users.append(int(parts[0]))
            cats.append(int(parts[2]))
            ts.append(int(parts[3]))
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer field") from None
        groups.append(_GROUP_CODE[parts[1]])
        if cats[-1] < 1 or (n_categories is not None and cats[-1] > n_categories):
            raise ValueError(f"line {lineno}: unknown category {cats[-1]}")
    L = n_categories if n_categories is not None else max(cats, default=1)
    return EventLog(np.array(users, dtype=np.int64), np.array(groups, dtype=np.int8),
                    np.array(cats, dtype=np.int64), np.array(ts, dtype=np.int64), L)


def write_demographics(demographics: Demographics, stream: TextIO) -> None:
    for u in sorted(demographics):
        age, gender = demographics[u]
        stream.write(f"{u}\t{age}\t{gender}\n")


def read_demographics(stream: TextIO) -> dict[int, tuple[int, int]]:
    out = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected user, age bucket, gender")
        u, age, gender = (int(p) for p in parts)
        if not 0 <= age < len(AGE_BUCKETS) or not 0 <= gender < len(GENDERS):
            raise ValueError(f"line {lineno}: age bucket must be 0-8 and gender 0-1")
        out[u] = (age, gender)
    return out
