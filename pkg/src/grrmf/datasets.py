"""Rating datasets in MovieLens triplet format.

Lines are ``user item rating [timestamp]`` separated by tabs or spaces.
External ids are kept as strings and mapped to dense indices in the order
they are first seen, so loading is deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from grrmf.core import ObservationSet
from grrmf.errors import ValidationError

log = logging.getLogger(__name__)

__all__ = ["RatingDataset", "load_movielens", "load_movielens_pair", "split", "write_movielens"]


@dataclass(frozen=True, eq=False)
class RatingDataset:
    n_users: int
    n_items: int
    n_levels: int
    observations: ObservationSet
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    rating_shift: int = -1
    timestamps: tuple[str, ...] | None = None
    protocol: str = "as loaded"

    def __post_init__(self):
        if len(self.user_ids) != self.n_users or len(self.item_ids) != self.n_items:
            raise ValidationError("id maps do not match the dataset size")
        if self.observations.shape != (self.n_users, self.n_items):
            raise ValidationError("observation shape does not match the dataset size")
        object.__setattr__(self, "_user_index", {u: i for i, u in enumerate(self.user_ids)})
        object.__setattr__(self, "_item_index", {v: i for i, v in enumerate(self.item_ids)})

    def __len__(self):
        return len(self.observations)

    def __eq__(self, other):
        if not isinstance(other, RatingDataset):
            return NotImplemented
        a, b = self.observations, other.observations
        return (
            (self.n_users, self.n_items, self.n_levels, self.user_ids, self.item_ids, self.rating_shift)
            == (other.n_users, other.n_items, other.n_levels, other.user_ids, other.item_ids, other.rating_shift)
            and self.timestamps == other.timestamps
            and np.array_equal(a.rows, b.rows)
            and np.array_equal(a.cols, b.cols)
            and np.array_equal(a.values, b.values)
            and np.array_equal(a.is_validation, b.is_validation)
        )

    __hash__ = None

    def user_index(self, user) -> int:
        try:
            return self._user_index[str(user)]
        except KeyError:
            raise ValidationError(f"unknown user {user!r}: no ratings for it in the training data") from None

    def item_index(self, item) -> int:
        try:
            return self._item_index[str(item)]
        except KeyError:
            raise ValidationError(f"unknown item {item!r}: no ratings for it in the training data") from None

    def with_observations(self, obs: ObservationSet, protocol: str) -> "RatingDataset":
        return RatingDataset(self.n_users, self.n_items, self.n_levels, obs, self.user_ids, self.item_ids,
                             self.rating_shift, self.timestamps, protocol)


def _is_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def _parse(path, rating_shift, n_levels, users, items, seen, start_val: bool):
    """Parse one file, extending the shared id maps. Returns per-line arrays."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows, cols, vals, stamps = [], [], [], []
    first_data = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        if first_data and not _is_int(parts[0]) and not (len(parts) >= 3 and _is_int(parts[2])):
            # a single header line is allowed; numeric ids mark a data line
            first_data = False
            log.debug("%s: skipping header line %d", path, lineno)
            continue
        first_data = False
        if len(parts) not in (3, 4):
            raise ValidationError(f"{path}:{lineno}: expected 'user item rating [timestamp]', got {raw!r}")
        if not _is_int(parts[2]):
            raise ValidationError(f"{path}:{lineno}: rating {parts[2]!r} is not an integer")
        level = int(parts[2]) + rating_shift
        if not 0 <= level <= n_levels:
            raise ValidationError(
                f"{path}:{lineno}: rating {parts[2]} outside {-rating_shift}..{n_levels - rating_shift}"
            )
        user, item = parts[0], parts[1]
        if (user, item) in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate rating for user {user}, item {item}")
        seen.add((user, item))
        rows.append(users.setdefault(user, len(users)))
        cols.append(items.setdefault(item, len(items)))
        vals.append(level)
        stamps.append(parts[3] if len(parts) == 4 else "")
    if not rows:
        raise ValidationError(f"{path}: no ratings found")
    return rows, cols, vals, stamps, [start_val] * len(rows)


def _build(parts, users, items, rating_shift, n_levels, protocol) -> RatingDataset:
    rows, cols, vals, stamps, flags = ([], [], [], [], [])
    for p in parts:
        for acc, new in zip((rows, cols, vals, stamps, flags), p):
            acc.extend(new)
    obs = ObservationSet((len(users), len(items)), rows, cols, vals, is_validation=np.array(flags, dtype=bool),
                         n_levels=n_levels)
    ts = tuple(stamps) if any(stamps) else None
    return RatingDataset(len(users), len(items), n_levels, obs, tuple(users), tuple(items), rating_shift, ts,
                         protocol)


def load_movielens(path, rating_shift: int = -1, n_levels: int = 4) -> RatingDataset:
    """Load a triplet file; ratings become levels ``rating + rating_shift`` in ``0..n_levels``."""
    users, items, seen = {}, {}, set()
    part = _parse(path, rating_shift, n_levels, users, items, seen, False)
    return _build([part], users, items, rating_shift, n_levels, "as loaded")


def load_movielens_pair(train_path, validation_path, rating_shift: int = -1, n_levels: int = 4) -> RatingDataset:
    """Load fixed train and validation files into one dataset with shared id maps."""
    users, items, seen = {}, {}, set()
    train_part = _parse(train_path, rating_shift, n_levels, users, items, seen, False)
    val_part = _parse(validation_path, rating_shift, n_levels, users, items, seen, True)
    protocol = f"paired files: {Path(train_path).name} / {Path(validation_path).name}"
    return _build([train_part, val_part], users, items, rating_shift, n_levels, protocol)


def split(ds: RatingDataset, val_fraction: float, seed: int = 0) -> RatingDataset:
    """Per-user stratified validation split.

    Each user sends ``round(val_fraction * count)`` of their ratings to
    validation, capped so that at least one rating stays in training.
    """
    if not 0 < val_fraction < 1:
        raise ValidationError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    obs = ds.observations
    rng = np.random.default_rng(seed)
    flags = np.zeros(len(obs), dtype=bool)
    order = np.argsort(obs.rows, kind="stable")
    bounds = np.searchsorted(obs.rows[order], np.arange(ds.n_users + 1))
    for user in range(ds.n_users):
        mine = order[bounds[user]:bounds[user + 1]]
        count = mine.size
        n_val = min(int(round(val_fraction * count)), count - 1)
        if n_val > 0:
            flags[rng.choice(mine, size=n_val, replace=False)] = True
    protocol = f"per-user split, val_fraction={val_fraction:g}, seed={seed}"
    return ds.with_observations(obs.with_split(flags), protocol)


def write_movielens(ds: RatingDataset, path, part: str = "all") -> None:
    """Write ratings back in tab-separated triplet form with external ids.

    ``part`` selects ``"all"``, ``"train"`` or ``"validation"`` entries.
    """
    obs = ds.observations
    if part == "all":
        keep = np.ones(len(obs), dtype=bool)
    elif part == "train":
        keep = ~obs.is_validation
    elif part == "validation":
        keep = obs.is_validation
    else:
        raise ValidationError(f"part must be 'all', 'train' or 'validation', got {part!r}")
    lines = []
    for idx in np.flatnonzero(keep):
        fields = [ds.user_ids[obs.rows[idx]], ds.item_ids[obs.cols[idx]], str(int(obs.values[idx]) - ds.rating_shift)]
        if ds.timestamps is not None:
            fields.append(ds.timestamps[idx])
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
