"""UCI HAR loading and the subject-based drift splits."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

N_FEATURES = 561
N_CLASSES = 6
HELD_OUT_SUBJECTS = (9, 14, 16, 19, 25)
PUBLIC_COUNTS = {"train": 7352, "test": 2947}
ACTIVITIES = ("walking", "walking_upstairs", "walking_downstairs", "sitting", "standing", "laying")
# subject ids of the public train/test files
UCI_TRAIN_SUBJECTS = (1, 3, 5, 6, 7, 8, 11, 14, 15, 16, 17, 19, 21, 22, 23, 25, 26, 27, 28, 29, 30)
UCI_TEST_SUBJECTS = (2, 4, 9, 10, 12, 13, 18, 20, 24)
DATA_ENV = "ODL_HAR_ROOT"


class DatasetError(Exception):
    pass


class MissingFile(DatasetError, FileNotFoundError):
    pass


class RowLengthError(DatasetError):
    pass


class LabelRangeError(DatasetError):
    pass


class CountMismatch(DatasetError):
    pass


@dataclass(frozen=True)
class HarData:
    """Samples as parallel arrays; ``origin`` is ``"train"`` or ``"test"``."""

    X: np.ndarray
    y: np.ndarray
    subject: np.ndarray
    origin: np.ndarray

    def __len__(self):
        return len(self.y)

    def take(self, mask_or_idx) -> "HarData":
        return HarData(self.X[mask_or_idx], self.y[mask_or_idx],
                       self.subject[mask_or_idx], self.origin[mask_or_idx])

    @staticmethod
    def concat(parts) -> "HarData":
        return HarData(*(np.concatenate([getattr(p, f) for p in parts])
                         for f in ("X", "y", "subject", "origin")))


@dataclass(frozen=True)
class DriftSplits:
    train: HarData
    test0: HarData
    test1: HarData


@dataclass(frozen=True)
class OdlPartition:
    odl_stream: HarData
    eval_after: HarData
    order: np.ndarray


def _locate(root: Path, group: str, stem: str) -> Path:
    for cand in (root / group / f"{stem}_{group}.txt", root / f"{stem}_{group}.txt"):
        if cand.is_file():
            return cand
    raise MissingFile(f"cannot find {stem}_{group}.txt under {root}")


def _read_features(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != N_FEATURES:
                raise RowLengthError(
                    f"{path}:{lineno}: expected {N_FEATURES} features, found {len(fields)}"
                )
            rows.append(fields)
    return np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES)


def _read_ints(path: Path) -> np.ndarray:
    with open(path) as fh:
        vals = [line.strip() for line in fh if line.strip()]
    try:
        return np.array([int(float(v)) for v in vals], dtype=np.int64)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def _resolve_root(root) -> Path:
    root = Path(root)
    nested = root / "UCI HAR Dataset"
    if not (root / "train").is_dir() and nested.is_dir():
        return nested
    return root


def load_har(root, expected_counts=PUBLIC_COUNTS) -> HarData:
    """Load the public HAR distribution (or a file-compatible fixture).

    Labels are shifted to 0-based. ``expected_counts`` maps ``train``/``test``
    to row counts to enforce; pass None to accept any size.
    """
    root = _resolve_root(root)
    parts = []
    for group in ("train", "test"):
        X = _read_features(_locate(root, group, "X"))
        y = _read_ints(_locate(root, group, "y"))
        s = _read_ints(_locate(root, group, "subject"))
        if not (len(X) == len(y) == len(s)):
            raise CountMismatch(
                f"{group}: X has {len(X)} rows, y {len(y)}, subject {len(s)}"
            )
        if expected_counts is not None and len(X) != expected_counts[group]:
            raise CountMismatch(f"{group}: {len(X)} rows, expected {expected_counts[group]}")
        bad = (y < 1) | (y > N_CLASSES)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise LabelRangeError(f"y_{group}.txt row {row + 1}: label {y[row]} outside 1..6")
        parts.append(HarData(X, y - 1, s, np.full(len(y), group)))
    return HarData.concat(parts)


def make_drift_splits(data: HarData, held_out=HELD_OUT_SUBJECTS) -> DriftSplits:
    out = np.isin(data.subject, held_out)
    splits = DriftSplits(
        train=data.take(~out & (data.origin == "train")),
        test0=data.take(~out & (data.origin == "test")),
        test1=data.take(out),
    )
    for name in ("train", "test0", "test1"):
        if len(getattr(splits, name)) == 0:
            log.warning("drift split %s is empty", name)
    return splits


def make_odl_partition(test1: HarData, seed, fraction=0.6) -> OdlPartition:
    """Seeded shuffle of test1; the first ``fraction`` becomes the ODL stream."""
    if len(test1) == 0:
        raise ValueError("test1 is empty")
    order = np.random.default_rng(seed).permutation(len(test1))
    k = int(round(fraction * len(test1)))
    return OdlPartition(test1.take(order[:k]), test1.take(order[k:]), order)


# ---------------------------------------------------------------------------
# synthetic data in the public file layout


def make_synthetic_har(n_samples=200, n_features=N_FEATURES, seed=0, class_sep=0.05,
                       drift_shift=0.12, noise=0.15, subject_noise=0.05) -> HarData:
    """HAR-shaped data with two Gaussian clusters per class.

    Held-in subjects draw from one cluster per class, held-out subjects from a
    second cluster displaced by ``drift_shift``, so the held-out subjects look
    like a sudden drift. Features are clipped to ``[-1, 1]``.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, class_sep, (N_CLASSES, n_features))
    shifted = centers + rng.normal(0.0, drift_shift, (N_CLASSES, n_features))
    offsets = {s: rng.normal(0.0, subject_noise, n_features) for s in range(1, 31)}
    subjects = np.array(UCI_TRAIN_SUBJECTS + UCI_TEST_SUBJECTS)
    subj = subjects[np.arange(n_samples) % len(subjects)]
    rng.shuffle(subj)
    y = rng.integers(0, N_CLASSES, n_samples)
    held = np.isin(subj, HELD_OUT_SUBJECTS)
    mean = np.where(held[:, None], shifted[y], centers[y])
    mean += np.stack([offsets[s] for s in subj])
    X = np.clip(mean + rng.normal(0.0, noise, (n_samples, n_features)), -1.0, 1.0)
    origin = np.where(np.isin(subj, UCI_TRAIN_SUBJECTS), "train", "test")
    return HarData(X, y, subj, origin)


def write_har_files(data: HarData, root) -> Path:
    """Write ``data`` in the public ``train/`` and ``test/`` text layout."""
    root = Path(root)
    for group in ("train", "test"):
        part = data.take(data.origin == group)
        d = root / group
        d.mkdir(parents=True, exist_ok=True)
        np.savetxt(d / f"X_{group}.txt", part.X, fmt="%.7e")
        np.savetxt(d / f"y_{group}.txt", part.y + 1, fmt="%d")
        np.savetxt(d / f"subject_{group}.txt", part.subject, fmt="%d")
    return root


def fixture_path() -> Path:
    """Directory of the bundled 200-sample synthetic fixture."""
    return Path(str(resources.files("tinyodl") / "data" / "mini_har"))


def default_root():
    return os.environ.get(DATA_ENV)
