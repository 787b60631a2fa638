"""Random Fourier feature maps for shift-invariant kernels.

A feature map is drawn once and then shared by every learner in the
network; agreement between learners' parameter vectors only means
something when they all use the same map.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, InputError

Seed = Union[int, Sequence[int]]

DEFAULT_NUM_FEATURES = 50
DEFAULT_DICTIONARY_SIZE = 17


class KernelFamily(enum.Enum):
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    """A shift-invariant kernel; ``variance`` is the Gaussian bandwidth sigma^2."""

    variance: float
    family: KernelFamily = KernelFamily.GAUSSIAN

    def __post_init__(self):
        if not np.isfinite(self.variance) or self.variance <= 0:
            raise ConfigurationError(f"kernel variance must be positive, got {self.variance!r}")
        if self.family is not KernelFamily.GAUSSIAN:
            raise ConfigurationError(f"unsupported kernel family {self.family!r}")

    def __call__(self, x1, x2) -> float:
        """Exact kernel value ``exp(-|x1 - x2|^2 / (2 sigma^2))``."""
        diff = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
        return float(np.exp(-np.dot(diff, diff) / (2.0 * self.variance)))

    def spectral_std(self) -> float:
        return 1.0 / np.sqrt(self.variance)


@dataclass(frozen=True, eq=False)
class RFFeatureMap:
    """Frozen spectral samples ``v_1..v_D`` defining ``z(x)``.

    ``z(x) = D**-0.5 * [sin(V x), cos(V x)]`` so ``|z(x)|^2 == 1`` for all x.
    """

    spectral_samples: np.ndarray  # (D, d)
    spec: KernelSpec = field(default=KernelSpec(1.0))

    def __post_init__(self):
        samples = np.array(self.spectral_samples, dtype=float, order="C")
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ConfigurationError("spectral samples must be a non-empty (D, d) array")
        samples.setflags(write=False)
        object.__setattr__(self, "spectral_samples", samples)

    @property
    def num_samples(self) -> int:
        return self.spectral_samples.shape[0]

    @property
    def dim_input(self) -> int:
        return self.spectral_samples.shape[1]

    @property
    def dim_features(self) -> int:
        return 2 * self.num_samples

    def features(self, x) -> np.ndarray:
        """Map one point ``(d,)`` to ``(2D,)``, or a batch ``(n, d)`` to ``(n, 2D)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim_input,) or x.ndim > 2:
            raise InputError(f"expected input of dimension {self.dim_input}, got shape {x.shape}")
        proj = x @ self.spectral_samples.T
        scale = 1.0 / np.sqrt(self.num_samples)
        return np.concatenate([np.sin(proj), np.cos(proj)], axis=-1) * scale

    def approx_kernel(self, x1, x2) -> float:
        return float(self.features(x1) @ self.features(x2))

    def __eq__(self, other):
        if not isinstance(other, RFFeatureMap):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.spectral_samples, other.spectral_samples)

    __hash__ = None


def _rng(seed: Seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def sample_feature_map(spec: KernelSpec, d: int, D: int, seed: Seed) -> RFFeatureMap:
    """Draw ``D`` i.i.d. frequencies from the kernel's spectral density N(0, sigma^-2 I)."""
    if int(d) != d or d < 1:
        raise ConfigurationError(f"input dimension must be >= 1, got {d!r}")
    if int(D) != D or D < 1:
        raise ConfigurationError(f"number of random features must be >= 1, got {D!r}")
    samples = _rng(seed).standard_normal((int(D), int(d))) * spec.spectral_std()
    return RFFeatureMap(samples, spec)


def features(fmap: RFFeatureMap, x) -> np.ndarray:
    return fmap.features(x)


def approx_kernel(fmap: RFFeatureMap, x1, x2) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise InputError(f"point shapes differ: {x1.shape} vs {x2.shape}")
    return fmap.approx_kernel(x1, x2)


@dataclass(frozen=True)
class KernelDictionary:
    """Ordered list of ``(KernelSpec, RFFeatureMap)`` pairs sharing input and feature sizes."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ConfigurationError("kernel dictionary needs at least one kernel")
        first = entries[0][1]
        for spec, fmap in entries:
            if fmap.dim_input != first.dim_input or fmap.dim_features != first.dim_features:
                raise ConfigurationError("all dictionary feature maps must share input and feature dimensions")
            if fmap.spec != spec:
                raise ConfigurationError("feature map was drawn for a different kernel spec")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, p):
        return self.entries[p]

    @property
    def specs(self):
        return [spec for spec, _ in self.entries]

    @property
    def maps(self):
        return [fmap for _, fmap in self.entries]

    @property
    def variances(self):
        return [spec.variance for spec, _ in self.entries]

    @property
    def dim_input(self) -> int:
        return self.entries[0][1].dim_input

    @property
    def dim_features(self) -> int:
        return self.entries[0][1].dim_features

    def features(self, x) -> np.ndarray:
        """``(P, 2D)`` for one point, ``(n, P, 2D)`` for a batch."""
        z = [fmap.features(x) for fmap in self.maps]
        return np.stack(z, axis=-2)

    def subset(self, indices) -> "KernelDictionary":
        return KernelDictionary(tuple(self.entries[i] for i in indices))


def dictionary_variances(size: int = DEFAULT_DICTIONARY_SIZE) -> list:
    """``10**((p - 9) / 2)`` for ``p = 1..size``; the default 17 span 1e-4 .. 1e4."""
    return [10.0 ** ((p - 9) / 2) for p in range(1, size + 1)]


def build_dictionary(variances, d: int, D: int, seed: int) -> KernelDictionary:
    """Feature map ``p`` (0-based) is seeded with ``(seed, p)``."""
    entries = []
    for p, var in enumerate(variances):
        spec = KernelSpec(float(var))
        entries.append((spec, sample_feature_map(spec, d, D, (int(seed), p))))
    return KernelDictionary(tuple(entries))


def default_dictionary(d: int, D: int = DEFAULT_NUM_FEATURES, seed: int = 0) -> KernelDictionary:
    return build_dictionary(dictionary_variances(), d, D, seed)
