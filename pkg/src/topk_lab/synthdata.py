"""Circle-mixture datasets: Gaussian classes in angle on the unit circle,
optionally with a shifted, less frequent minor mode per class.

Sampling order, fixed for reproducibility: class by class, point by point;
for each point the mode is chosen first (one uniform draw, only when a
minor mode exists), then the angle (one standard-normal draw).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from topk_lab.core import InvalidInputError, RngStream, seeded_rng


class DatasetFormatError(ValueError):
    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class MinorMode:
    offset_deg: float
    relative_frequency: float = 0.5
    sigma_deg: float | None = None  # None: same width as the major mode


@dataclass(frozen=True)
class CircleMixtureSpec:
    n_classes: int = 6
    class_spacing_deg: float = 60.0
    sigma_deg: float = 20.0
    minor_mode: MinorMode | None = None
    samples_per_class: int = 300

    def __post_init__(self):
        if self.n_classes < 2:
            raise InvalidInputError("n_classes must be >= 2")
        if not self.sigma_deg > 0:
            raise InvalidInputError("sigma_deg must be positive")
        if self.samples_per_class < 1:
            raise InvalidInputError("samples_per_class must be >= 1")
        mm = self.minor_mode
        if mm is not None:
            if not 0 < mm.relative_frequency < 1:
                raise InvalidInputError("minor mode relative_frequency must be in (0, 1)")
            if mm.sigma_deg is not None and not mm.sigma_deg > 0:
                raise InvalidInputError("minor mode sigma_deg must be positive")

    def center_deg(self, c: int) -> float:
        return c * self.class_spacing_deg

    @property
    def minor_weight(self) -> float:
        """Mixture weight of the minor mode (1/3 for relative frequency 1/2)."""
        if self.minor_mode is None:
            return 0.0
        r = self.minor_mode.relative_frequency
        return r / (1.0 + r)

    @property
    def minor_sigma_deg(self) -> float:
        if self.minor_mode is None or self.minor_mode.sigma_deg is None:
            return self.sigma_deg
        return self.minor_mode.sigma_deg

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CircleMixtureSpec":
        d = dict(d)
        mm = d.get("minor_mode")
        if mm is not None:
            d["minor_mode"] = MinorMode(**mm)
        return cls(**d)


def experiment1_spec(sigma_deg: float, samples_per_class: int = 300) -> CircleMixtureSpec:
    return CircleMixtureSpec(sigma_deg=sigma_deg, samples_per_class=samples_per_class)


def experiment2_spec(offset_deg: float, samples_per_class: int = 300) -> CircleMixtureSpec:
    return CircleMixtureSpec(
        sigma_deg=10.0, minor_mode=MinorMode(offset_deg), samples_per_class=samples_per_class
    )


@dataclass
class LabeledDataset:
    points: np.ndarray  # (M, 2), on the unit circle
    labels: np.ndarray  # (M,), int
    spec: CircleMixtureSpec
    seed: int
    angles_deg: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.seed == other.seed
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.labels, other.labels)
        )


def sample_dataset(spec: CircleMixtureSpec, rng: RngStream) -> LabeledDataset:
    n, per = spec.n_classes, spec.samples_per_class
    gen = rng.generator
    w_minor = spec.minor_weight
    angles = np.empty(n * per)
    labels = np.repeat(np.arange(n), per)
    for c in range(n):
        center = spec.center_deg(c)
        for j in range(per):
            if spec.minor_mode is not None and gen.random() < w_minor:
                mu, sd = center + spec.minor_mode.offset_deg, spec.minor_sigma_deg
            else:
                mu, sd = center, spec.sigma_deg
            angles[c * per + j] = mu + sd * gen.standard_normal()
    rad = np.deg2rad(angles)
    points = np.column_stack([np.cos(rad), np.sin(rad)])
    return LabeledDataset(points, labels, spec, rng.seed, angles)


def _gauss(x, mu, sd):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))


def true_density(spec: CircleMixtureSpec, theta_deg, c: int):
    """Class-``c`` density over angle (per degree), not wrapped around the circle."""
    if not 0 <= c < spec.n_classes:
        raise InvalidInputError(f"class {c} out of range")
    theta = np.asarray(theta_deg, dtype=np.float64)
    center = spec.center_deg(c)
    w = spec.minor_weight
    dens = (1.0 - w) * _gauss(theta, center, spec.sigma_deg)
    if spec.minor_mode is not None:
        dens = dens + w * _gauss(theta, center + spec.minor_mode.offset_deg, spec.minor_sigma_deg)
    return float(dens) if dens.ndim == 0 else dens


def circular_density(spec: CircleMixtureSpec, theta_deg, c: int):
    """:func:`true_density` summed over the images theta - 360, theta, theta + 360."""
    theta = np.asarray(theta_deg, dtype=np.float64)
    return sum(true_density(spec, theta + 360.0 * j, c) for j in (-1, 0, 1))


_HEADER_PREFIX = "# spec="


def write_dataset(ds: LabeledDataset, path) -> None:
    """Write ``ds`` as CSV: a ``# spec={json}, seed=K`` line, then ``x,y,label`` rows.

    Coordinates use Python's shortest round-trip float repr.
    """
    spec_json = json.dumps(ds.spec.to_dict(), sort_keys=True, separators=(",", ":"))
    lines = [f"{_HEADER_PREFIX}{spec_json}, seed={ds.seed}", "x,y,label"]
    lines += [f"{x!r},{y!r},{int(l)}" for (x, y), l in zip(ds.points.tolist(), ds.labels)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path) -> LabeledDataset:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith(_HEADER_PREFIX):
        raise DatasetFormatError("missing '# spec={...}, seed=K' header", 1)
    head = text[0][len(_HEADER_PREFIX):]
    spec_part, sep, seed_part = head.rpartition(", seed=")
    try:
        if not sep:
            raise ValueError("no seed field")
        spec = CircleMixtureSpec.from_dict(json.loads(spec_part))
        seed = int(seed_part)
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"bad header: {exc}", 1) from None
    if len(text) < 2 or text[1].strip() != "x,y,label":
        raise DatasetFormatError("expected column header 'x,y,label'", 2)
    xs, ys, labels = [], [], []
    for lineno, line in enumerate(text[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DatasetFormatError(f"expected 3 fields, got {len(parts)}", lineno)
        try:
            x, y, lab = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise DatasetFormatError(str(exc), lineno) from None
        if not 0 <= lab < spec.n_classes:
            raise DatasetFormatError(f"label {lab} outside [0, {spec.n_classes})", lineno)
        xs.append(x)
        ys.append(y)
        labels.append(lab)
    labels_arr = np.array(labels, dtype=np.int64)
    counts = np.bincount(labels_arr, minlength=spec.n_classes)
    if np.any(counts != spec.samples_per_class):
        raise DatasetFormatError(
            f"class counts {counts.tolist()} do not match samples_per_class={spec.samples_per_class}",
            len(text),
        )
    return LabeledDataset(np.column_stack([xs, ys]), labels_arr, spec, seed)


def regenerate(ds: LabeledDataset) -> LabeledDataset:
    """Resample a dataset from its recorded spec and seed."""
    return sample_dataset(ds.spec, seeded_rng(ds.seed))
