"""Synthetic multimodal datasets with controllable per-modality informativeness.

Each instance has a scalar latent signal. A modality with informativeness a
sees a random projection of (a * signal + (1 - a) * independent noise), so
a = 1 determines the target exactly and a = 0 is pure distractor. Targets
are the signal itself (regression) or its quantile bins (classification).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InvalidSpecError, ShapeError
from .moe import DataBatch

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = {"train": TRAIN, "val": VAL, "test": TEST}


@dataclass(frozen=True)
class SyntheticSpec:
    n_instances: int
    modality_dims: tuple[int, ...]
    informativeness: tuple[float, ...]
    noise_sigma: float = 0.1
    task: str = "regression"
    n_classes: int = 0
    nonlinearity: str = "linear"
    seed: int = 0
    # Optional Dirichlet-style class priors for imbalanced classification bins.
    class_priors: tuple[float, ...] | None = None
    # Test hook: force two modalities onto the same random substream.
    modality_stream_seeds: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "modality_dims", tuple(int(d) for d in self.modality_dims))
        object.__setattr__(self, "informativeness", tuple(float(a) for a in self.informativeness))
        if self.class_priors is not None:
            object.__setattr__(self, "class_priors", tuple(float(p) for p in self.class_priors))
        if self.modality_stream_seeds is not None:
            object.__setattr__(
                self, "modality_stream_seeds", tuple(int(s) for s in self.modality_stream_seeds)
            )
        if self.n_instances < 2:
            raise InvalidSpecError("n_instances must be >= 2")
        if len(self.modality_dims) != len(self.informativeness):
            raise InvalidSpecError("informativeness length must equal modality count")
        if any(not 0.0 <= a <= 1.0 for a in self.informativeness):
            raise InvalidSpecError("informativeness values must lie in [0, 1]")
        if not any(a > 0 for a in self.informativeness):
            raise InvalidSpecError("at least one modality must have informativeness > 0")
        if self.noise_sigma < 0:
            raise InvalidSpecError("noise_sigma must be >= 0")
        if self.task not in ("regression", "classification"):
            raise InvalidSpecError(f"unknown task {self.task!r}")
        if self.task == "classification" and self.n_classes < 2:
            raise InvalidSpecError("classification needs n_classes >= 2")
        if self.nonlinearity not in ("linear", "tanh-mixed"):
            raise InvalidSpecError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.class_priors is not None:
            if len(self.class_priors) != self.n_classes:
                raise InvalidSpecError("class_priors length must equal n_classes")
            if any(p <= 0 for p in self.class_priors):
                raise InvalidSpecError("class_priors must be positive")
        if self.modality_stream_seeds is not None and len(self.modality_stream_seeds) != len(
            self.modality_dims
        ):
            raise InvalidSpecError("modality_stream_seeds length must equal modality count")

    @property
    def n_modalities(self) -> int:
        return len(self.modality_dims)

    def to_dict(self) -> dict:
        d = {
            "n_instances": self.n_instances,
            "modality_dims": list(self.modality_dims),
            "informativeness": list(self.informativeness),
            "noise_sigma": self.noise_sigma,
            "task": self.task,
            "n_classes": self.n_classes,
            "nonlinearity": self.nonlinearity,
            "seed": self.seed,
        }
        if self.class_priors is not None:
            d["class_priors"] = list(self.class_priors)
        if self.modality_stream_seeds is not None:
            d["modality_stream_seeds"] = list(self.modality_stream_seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        d["modality_dims"] = tuple(d["modality_dims"])
        d["informativeness"] = tuple(d["informativeness"])
        if d.get("class_priors") is not None:
            d["class_priors"] = tuple(d["class_priors"])
        if d.get("modality_stream_seeds") is not None:
            d["modality_stream_seeds"] = tuple(d["modality_stream_seeds"])
        return cls(**d)


@dataclass
class Dataset:
    features: list[np.ndarray]
    targets: np.ndarray
    split_tags: np.ndarray  # int8 codes: 0 train, 1 val, 2 test
    task: str
    n_classes: int = 0
    spec: SyntheticSpec | None = None
    split_seed: int | None = None
    split_fractions: tuple[float, float, float] | None = None

    @property
    def n_instances(self) -> int:
        return int(self.targets.shape[0])

    @property
    def n_modalities(self) -> int:
        return len(self.features)

    def indices(self, split: str) -> np.ndarray:
        return np.nonzero(self.split_tags == SPLIT_NAMES[split])[0]

    def batch(self, split: str) -> DataBatch:
        idx = self.indices(split)
        if idx.size == 0:
            raise InvalidInputError(f"split {split!r} is empty")
        return DataBatch(
            features=[f[idx] for f in self.features],
            targets=self.targets[idx],
        )


def _quantile_bins(signal: np.ndarray, n_classes: int, priors) -> np.ndarray:
    """Rank-based binning: balanced classes, or prior-shaped ones when given."""
    n = signal.shape[0]
    order = np.argsort(signal, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    if priors is None:
        return (ranks * n_classes) // n
    cum = np.cumsum(np.asarray(priors, dtype=np.float64))
    cum /= cum[-1]
    boundaries = np.rint(cum * n).astype(np.int64)
    return np.searchsorted(boundaries, ranks, side="right")


def generate(spec: SyntheticSpec) -> Dataset:
    """Draw a dataset from the spec; bit-identical for identical specs."""
    signal_rng = np.random.default_rng([spec.seed, 0])
    signal = signal_rng.standard_normal(spec.n_instances)

    features = []
    for m in range(spec.n_modalities):
        stream = spec.modality_stream_seeds[m] if spec.modality_stream_seeds else m
        rng = np.random.default_rng([spec.seed, 1 + stream])
        dim = spec.modality_dims[m]
        a = spec.informativeness[m]
        distractor = rng.standard_normal(spec.n_instances)
        projection = rng.standard_normal(dim)
        base = a * signal + (1.0 - a) * distractor
        mat = base[:, None] * projection[None, :]
        if spec.nonlinearity == "tanh-mixed":
            mat = mat.copy()
            mat[:, 1::2] = np.tanh(mat[:, 1::2])
        if spec.noise_sigma > 0:
            mat = mat + spec.noise_sigma * rng.standard_normal((spec.n_instances, dim))
        # Standardize columns so feature scale is independent of the noise
        # level and projection draw; keeps training stable across specs.
        mat = mat - mat.mean(axis=0)
        stds = mat.std(axis=0)
        stds[stds == 0] = 1.0
        features.append(mat / stds)

    if spec.task == "regression":
        targets = signal
        n_classes = 0
    else:
        targets = _quantile_bins(signal, spec.n_classes, spec.class_priors)
        n_classes = spec.n_classes

    return Dataset(
        features=features,
        targets=targets,
        split_tags=np.zeros(spec.n_instances, dtype=np.int8),
        task=spec.task,
        n_classes=n_classes,
        spec=spec,
    )


def split(dataset: Dataset, fractions, seed: int) -> Dataset:
    """Tag instances train/val/test by a seeded permutation, reproducibly."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise InvalidInputError("expected exactly three fractions")
    if any(f <= 0 for f in fractions):
        raise InvalidInputError(f"fractions must all be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInputError(f"fractions sum to {sum(fractions)}, not 1")

    n = dataset.n_instances
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n_train + n_val >= n:
        raise InvalidInputError("train+val fractions leave no test instances")
    perm = np.random.default_rng(seed).permutation(n)
    tags = np.empty(n, dtype=np.int8)
    tags[perm[:n_train]] = TRAIN
    tags[perm[n_train : n_train + n_val]] = VAL
    tags[perm[n_train + n_val :]] = TEST
    return Dataset(
        features=dataset.features,
        targets=dataset.targets,
        split_tags=tags,
        task=dataset.task,
        n_classes=dataset.n_classes,
        spec=dataset.spec,
        split_seed=seed,
        split_fractions=fractions,
    )


def write_matrix(path, arr: np.ndarray) -> None:
    """Fixed-header binary matrix: uint32 ndim, uint32 dims, float64 LE payload."""
    arr = np.asarray(arr, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ShapeError(f"matrix file {path} payload does not match header {shape}")
    return data.reshape(shape).astype(np.float64)


def save_dataset(dataset: Dataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    modality_files = []
    for m, mat in enumerate(dataset.features):
        name = f"modality_{m}.bin"
        write_matrix(out / name, mat)
        modality_files.append(name)
    write_matrix(out / "targets.bin", dataset.targets.astype(np.float64))
    meta = {
        "format": "btwmoe-dataset-v1",
        "n_instances": dataset.n_instances,
        "task": dataset.task,
        "n_classes": dataset.n_classes,
        "modality_files": modality_files,
        "targets_file": "targets.bin",
        "split_tags": dataset.split_tags.tolist(),
        "split_seed": dataset.split_seed,
        "split_fractions": list(dataset.split_fractions) if dataset.split_fractions else None,
        "spec": dataset.spec.to_dict() if dataset.spec else None,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_dataset(in_dir) -> Dataset:
    src = Path(in_dir)
    meta = json.loads((src / "meta.json").read_text())
    if meta.get("format") != "btwmoe-dataset-v1":
        raise InvalidInputError(f"unrecognized dataset format in {src}")
    features = [read_matrix(src / name) for name in meta["modality_files"]]
    targets = read_matrix(src / meta["targets_file"])
    if meta["task"] == "classification":
        targets = targets.astype(np.int64)
    return Dataset(
        features=features,
        targets=targets,
        split_tags=np.asarray(meta["split_tags"], dtype=np.int8),
        task=meta["task"],
        n_classes=meta["n_classes"],
        spec=SyntheticSpec.from_dict(meta["spec"]) if meta.get("spec") else None,
        split_seed=meta.get("split_seed"),
        split_fractions=tuple(meta["split_fractions"]) if meta.get("split_fractions") else None,
    )
