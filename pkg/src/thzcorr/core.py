"""Shared physical constants, field traces and reproducible random streams.

Everything is SI internally. Conversions to display units (fs, THz, V/m,
uW) happen only at the I/O boundary.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class PhysicalConstants:
    h: float = 6.62607015e-34
    c: float = 299792458.0
    eps0: float = 8.8541878128e-12
    e_charge: float = 1.602176634e-19

    @property
    def hbar(self) -> float:
        return self.h / (2.0 * math.pi)


CONST = PhysicalConstants()

# Gaussian FWHM -> standard deviation
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class OutOfRange(ValueError):
    """Field requested outside the span a trace is defined on."""


@dataclass(frozen=True)
class FieldTrace:
    """Real electric field E(t) in V/m, evaluable anywhere in ``[t_start, t_end]``.

    ``sampler`` must be vectorised and deterministic. ``probe_filtered``, when
    present, returns the field convolved with a unit-area Gaussian of
    standard deviation ``sigma`` exactly (sources built from tones know
    their own transfer function); the detector falls back to quadrature
    otherwise. ``pulse_train`` is an optional fast path for evaluating the
    filtered field at ``i / f_rep + offset`` for integer pulse indices ``i``.
    """

    sampler: Callable[[np.ndarray], np.ndarray]
    t_start: float
    t_end: float
    nu0: float
    amplitude: float
    kind: str = "generic"
    probe_filtered: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    pulse_train: Optional[Callable[[np.ndarray, float, float, float], np.ndarray]] = None

    def check_span(self, t) -> None:
        t = np.asarray(t, dtype=float)
        if t.size == 0:
            return
        lo, hi = float(np.min(t)), float(np.max(t))
        if lo < self.t_start or hi > self.t_end:
            raise OutOfRange(
                f"t in [{lo:.6g}, {hi:.6g}] s outside trace span "
                f"[{self.t_start:.6g}, {self.t_end:.6g}] s"
            )

    def __call__(self, t):
        self.check_span(t)
        return self.sampler(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class RandomStream:
    """A numpy Generator bound to a (master_seed, stream_id) pair.

    Streams are cheap; derive a fresh one per task instead of sharing.
    """

    master_seed: int
    stream_id: str
    generator: np.random.Generator = field(compare=False, repr=False)

    def child(self, label) -> "RandomStream":
        return derive_stream(self.master_seed, f"{self.stream_id}/{label}")


def stream_entropy(master_seed: int, stream_id: str) -> int:
    digest = hashlib.blake2b(
        f"{int(master_seed)}\x1f{stream_id}".encode(), digest_size=16
    ).digest()
    return int.from_bytes(digest, "little")


def derive_stream(master_seed: int, stream_id: str) -> RandomStream:
    """Deterministic child generator for ``stream_id`` under ``master_seed``.

    The label is hashed together with the seed (BLAKE2b, 128 bit) and the
    digest seeds a PCG64 generator, so parallel workers need no shared state.
    """
    if not stream_id:
        raise ValueError("stream_id must be non-empty")
    seq = np.random.SeedSequence(stream_entropy(master_seed, stream_id))
    return RandomStream(int(master_seed), stream_id, np.random.Generator(np.random.PCG64(seq)))


def derive_seed(master_seed: int, label: str) -> int:
    """63-bit integer seed for a sub-task, e.g. one point of a sweep."""
    return stream_entropy(master_seed, label) & ((1 << 63) - 1)
