"""Observation generators for the three toy systems.

Each generator draws the hidden physical parameter i.i.d. and returns the
observations together with a separate table of ground-truth labels. The
labels are for evaluation only and are written to their own file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from topovae.data import PointCloud, Table, as_meta, rng_stream

TWO_PI = 2.0 * math.pi


class PhysicsError(ValueError):
    pass


@dataclass(frozen=True)
class OscillatorConfig:
    """Ball between two springs anchored at -1/2 and +1/2."""

    mass: float = 1.0
    k1: float = 1.0
    k2: float = 1.0
    amplitude: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.amplitude <= 0.5:
            raise PhysicsError("amplitude must lie in (0, 1/2] to keep the ball between anchors")
        if self.mass <= 0 or self.k1 <= 0 or self.k2 <= 0:
            raise PhysicsError("mass and spring constants must be positive")

    @property
    def omega(self) -> float:
        return math.sqrt((self.k1 + self.k2) / self.mass)


@dataclass(frozen=True)
class OrbitConfig:
    radius: float = 1.0
    omega1: float = 1.0
    omega2: float = 2.0

    def __post_init__(self):
        if self.omega2 != 2.0 * self.omega1:
            raise PhysicsError("ball-2 must rotate at twice the angular speed of ball-1")


@dataclass(frozen=True)
class LabeledData:
    cloud: PointCloud
    labels: Table


def _check_n(n: int) -> None:
    if n < 1:
        raise PhysicsError(f"need at least one sample, got n={n}")


# ---------------------------------------------------------------- oscillator


def _split_distances(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Compute the distance that is >= 1/2 first; 1 - d is then exact
    # (Sterbenz), which makes x1 + x2 == 1 hold bit for bit.
    x1 = np.empty_like(x)
    x2 = np.empty_like(x)
    right = x >= 0
    x1[right] = 0.5 + x[right]
    x2[right] = 1.0 - x1[right]
    x2[~right] = 0.5 - x[~right]
    x1[~right] = 1.0 - x2[~right]
    return x1, x2


def oscillator_observation(phase, cfg: OscillatorConfig = OscillatorConfig()) -> np.ndarray:
    """Observation rows ``(x1, x2, v)`` at the given phases."""
    phase = np.atleast_1d(np.asarray(phase, dtype=np.float64))
    x = cfg.amplitude * np.cos(phase)
    v = -cfg.amplitude * cfg.omega * np.sin(phase)
    x1, x2 = _split_distances(x)
    return np.column_stack([x1, x2, v])


def energy(sample, cfg: OscillatorConfig = OscillatorConfig()):
    """Total energy of one ``(x1, x2, v)`` sample, or of each row of an array."""
    s = np.asarray(sample, dtype=np.float64)
    x1, v = s[..., 0], s[..., 2]
    x = x1 - 0.5
    e = 0.5 * cfg.mass * v**2 + 0.5 * cfg.k1 * (x - 0.5) ** 2 + 0.5 * cfg.k2 * (x + 0.5) ** 2
    return float(e) if np.ndim(e) == 0 else e


def gen_oscillator(cfg: OscillatorConfig, n: int, rng: np.random.Generator) -> LabeledData:
    _check_n(n)
    phase = rng.uniform(0.0, TWO_PI, size=n)
    meta = as_meta({"system": "oscillator", "param.amplitude": cfg.amplitude,
                    "param.mass": cfg.mass, "param.k1": cfg.k1, "param.k2": cfg.k2})
    return LabeledData(
        PointCloud(oscillator_observation(phase, cfg), meta),
        Table(("phase",), phase[:, None], {"system": "oscillator"}),
    )


# --------------------------------------------------------------------- orbit


def orbit_observation(t, cfg: OrbitConfig = OrbitConfig()) -> np.ndarray:
    """Position of ball-1 relative to ball-2 (translation only)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    r = cfg.radius
    a, b = cfg.omega1 * t, cfg.omega2 * t
    ball1 = np.column_stack([r * np.cos(a), r * np.sin(a), np.zeros_like(t)])
    ball2 = np.column_stack([r * np.sin(b), np.zeros_like(t), r * np.cos(b)])
    return ball1 - ball2


def gen_orbit(cfg: OrbitConfig, n: int, rng: np.random.Generator) -> LabeledData:
    _check_n(n)
    t = rng.uniform(0.0, TWO_PI, size=n)
    meta = as_meta({"system": "orbit", "param.radius": cfg.radius,
                    "param.omega1": cfg.omega1, "param.omega2": cfg.omega2})
    return LabeledData(
        PointCloud(orbit_observation(t, cfg), meta),
        Table(("t",), t[:, None], {"system": "orbit"}),
    )


# --------------------------------------------------------------------- qubit

OBSERVABLES = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, 1j], [-1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
    np.array([[0, 1 + 1j], [1 - 1j, 0]], dtype=complex),
    np.array([[1, 1j], [-1j, -1]], dtype=complex),
)


@dataclass(frozen=True)
class QubitState:
    a: complex
    b: complex

    def __post_init__(self):
        norm = abs(self.a) ** 2 + abs(self.b) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise PhysicsError(f"state is not normalized: |a|^2+|b|^2 = {norm!r}")

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "QubitState":
        return cls(complex(math.cos(theta / 2)), np.exp(1j * phi) * math.sin(theta / 2))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a, self.b], dtype=complex)


def expectation(state: QubitState, obs: np.ndarray) -> float:
    """Real expectation value <psi|O|psi> of a Hermitian observable."""
    obs = np.asarray(obs, dtype=complex)
    if obs.shape != (2, 2) or not np.allclose(obs, obs.conj().T, rtol=0, atol=1e-12):
        raise PhysicsError("observable must be a 2x2 Hermitian matrix")
    psi = state.vector
    value = np.vdot(psi, obs @ psi)
    if abs(value.imag) >= 1e-12:
        raise PhysicsError(f"expectation has imaginary part {value.imag!r}")
    return float(value.real)


def qubit_observation(theta, phi) -> np.ndarray:
    """Five expectation values per state, by direct matrix evaluation."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    psi = np.stack([np.cos(theta / 2) + 0j, np.exp(1j * phi) * np.sin(theta / 2)], axis=1)
    ops = np.stack(OBSERVABLES)
    vals = np.einsum("ni,kij,nj->nk", psi.conj(), ops, psi)
    return np.ascontiguousarray(vals.real)


def gen_qubit(n: int, rng: np.random.Generator) -> LabeledData:
    """Haar-uniform pure states: cos(theta) ~ U[-1,1], phi ~ U[0,2pi)."""
    _check_n(n)
    cos_theta = rng.uniform(-1.0, 1.0, size=n)
    phi = rng.uniform(0.0, TWO_PI, size=n)
    theta = np.arccos(cos_theta)
    return LabeledData(
        PointCloud(qubit_observation(theta, phi), {"system": "qubit"}),
        Table(("theta", "phi"), np.column_stack([theta, phi]), {"system": "qubit"}),
    )


def generate(system: str, n: int, seed: int) -> LabeledData:
    """Generate a labeled dataset for one of the named systems."""
    rng = rng_stream(seed, f"data/{system}")
    if system == "oscillator":
        out = gen_oscillator(OscillatorConfig(), n, rng)
    elif system == "orbit":
        out = gen_orbit(OrbitConfig(), n, rng)
    elif system == "qubit":
        out = gen_qubit(n, rng)
    else:
        raise PhysicsError(f"unknown system {system!r}")
    meta = dict(out.cloud.meta, seed=str(seed))
    return LabeledData(PointCloud(out.cloud.points, meta), out.labels)
