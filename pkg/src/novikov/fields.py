"""Periodic, pseudoperiodic and quasiperiodic scalar functions.

A :class:`TrigField` is a finite cosine sum with integer frequency vectors.
It is 1-periodic in every coordinate and carries analytic derivatives, which
the tracers and critical-point solvers rely on.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class FieldError(ValueError):
    """Raised for malformed field data or dimension mismatches."""


def _canonical_terms(freqs, amps, phases, tol=0.0):
    """Sign-normalize frequencies and merge repeated ones.

    cos(-t - p) == cos(t + p), so flipping a frequency flips its phase.
    Repeated frequencies are merged through their complex amplitudes.
    """
    freqs = np.asarray(freqs, dtype=np.int64)
    if freqs.ndim != 2:
        freqs = freqs.reshape(len(amps), -1)
    merged: dict[tuple[int, ...], complex] = {}
    order: list[tuple[int, ...]] = []
    for k, a, p in zip(freqs, amps, phases):
        k = tuple(int(x) for x in k)
        nz = next((x for x in k if x != 0), 0)
        if nz < 0:
            k = tuple(-x for x in k)
            p = -p
        z = a * np.exp(1j * p)
        if not any(k):
            z = complex(z.real, 0.0)  # constant term: only the real part survives
        if k not in merged:
            merged[k] = 0j
            order.append(k)
        merged[k] += z
    keys = [k for k in sorted(order) if abs(merged[k]) > tol]
    out_k = np.array(keys, dtype=np.int64).reshape(len(keys), freqs.shape[1])
    z = np.array([merged[k] for k in keys], dtype=complex)
    amp = np.abs(z)
    phase = np.angle(z)
    # keep the plain cosine form a*cos(...) for real positive/negative coefficients
    neg_real = np.isclose(np.abs(phase), np.pi) & (np.abs(z.imag) <= 1e-15 * np.maximum(amp, 1))
    amp[neg_real] *= -1
    phase[neg_real] = 0.0
    phase[np.abs(phase) < 1e-300] = 0.0
    return out_k, amp, phase


@dataclass(frozen=True)
class TrigField:
    """Finite cosine sum ``x -> sum_i a_i cos(2 pi <k_i, x> + phi_i)``.

    Attributes:
        dimension: Number of variables.
        freqs: Integer frequency vectors, shape (n_terms, dimension).
        amps: Amplitudes, shape (n_terms,).
        phases: Phases in radians, shape (n_terms,).
    """

    dimension: int
    freqs: np.ndarray
    amps: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        if self.dimension < 1:
            raise FieldError("dimension must be positive")
        freqs = np.asarray(self.freqs, dtype=np.int64).reshape(-1, self.dimension)
        amps = np.asarray(self.amps, dtype=float).reshape(-1)
        phases = np.asarray(self.phases, dtype=float).reshape(-1)
        if not (len(freqs) == len(amps) == len(phases)):
            raise FieldError("frequency, amplitude and phase counts differ")
        k, a, p = _canonical_terms(freqs, amps, phases)
        for name, arr in (("freqs", k), ("amps", a), ("phases", p)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_terms(cls, terms: Sequence[tuple[Sequence[int], float, float]]) -> "TrigField":
        """Build from ``(frequency, amplitude, phase)`` triples."""
        if not terms:
            raise FieldError("a field needs at least one term to fix its dimension")
        dim = len(terms[0][0])
        if any(len(t[0]) != dim for t in terms):
            raise FieldError("frequency vectors of different lengths")
        return cls(dim, [t[0] for t in terms], [t[1] for t in terms], [t[2] for t in terms])

    def __len__(self) -> int:
        return len(self.amps)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise FieldError(f"point dimension {x.shape[-1]} != field dimension {self.dimension}")
        return x

    def _arg(self, x):
        return TWO_PI * (x @ self.freqs.T.astype(float)) + self.phases

    def value(self, x) -> np.ndarray:
        """Field value at points of shape (..., dimension)."""
        x = self._check(x)
        return np.cos(self._arg(x)) @ self.amps

    def gradient(self, x) -> np.ndarray:
        """Analytic gradient, shape (..., dimension)."""
        x = self._check(x)
        s = -TWO_PI * np.sin(self._arg(x)) * self.amps
        return s @ self.freqs.astype(float)

    def hessian(self, x) -> np.ndarray:
        """Analytic Hessian, shape (..., dimension, dimension)."""
        x = self._check(x)
        w = -(TWO_PI ** 2) * np.cos(self._arg(x)) * self.amps
        k = self.freqs.astype(float)
        return np.einsum("...t,ti,tj->...ij", w, k, k)

    __call__ = value

    def bound(self) -> float:
        """Upper bound on |field| (sum of absolute amplitudes)."""
        return float(np.abs(self.amps).sum())

    def lipschitz(self) -> float:
        """Upper bound on the gradient norm."""
        return float(TWO_PI * (np.abs(self.amps) * np.linalg.norm(self.freqs, axis=1)).sum())

    def range_estimate(self, resolution: int = 48) -> tuple[float, float]:
        """Approximate (min, max) from a grid sample refined by the Lipschitz bound."""
        g = (np.arange(resolution) + 0.5) / resolution
        pts = np.stack(np.meshgrid(*([g] * self.dimension), indexing="ij"), -1)
        v = self.value(pts)
        return float(v.min()), float(v.max())

    def to_text(self) -> str:
        lines = [str(self.dimension)]
        for k, a, p in zip(self.freqs, self.amps, self.phases):
            lines.append(" ".join(str(int(x)) for x in k) + f"  {float(a)!r}  {float(p)!r}")
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        if not isinstance(other, TrigField):
            return NotImplemented
        return (self.dimension == other.dimension and np.array_equal(self.freqs, other.freqs)
                and np.array_equal(self.amps, other.amps) and np.array_equal(self.phases, other.phases))

    def __hash__(self):
        return hash((self.dimension, self.freqs.tobytes(), self.amps.tobytes(), self.phases.tobytes()))


def eval_field(field: TrigField, point) -> np.ndarray:
    """Evaluate ``field`` at one point or a stack of points."""
    return field.value(point)


def grad_field(field: TrigField, point) -> np.ndarray:
    """Analytic gradient of ``field`` at one point or a stack of points."""
    return field.gradient(point)


def cos3() -> TrigField:
    """cos 2pi x + cos 2pi y + cos 2pi z."""
    return TrigField.from_terms([((1, 0, 0), 1.0, 0.0), ((0, 1, 0), 1.0, 0.0), ((0, 0, 1), 1.0, 0.0)])


def cos3d() -> TrigField:
    """cos x cos y + cos y cos z + cos z cos x (angles 2 pi x etc.), as six harmonics."""
    terms = []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        for sgn in (1, -1):
            k = [0, 0, 0]
            k[i] = 1
            k[j] = sgn
            terms.append((tuple(k), 0.5, 0.0))
    return TrigField.from_terms(terms)


BUILTIN_FIELDS: dict[str, Callable[[], TrigField]] = {"cos3": cos3, "cos3d": cos3d}


def parse_field(text: str) -> TrigField:
    """Parse the text field format: dimension line, then ``k1 .. km amplitude phase`` lines."""
    rows = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows:
        raise FieldError("empty field specification")
    try:
        dim = int(rows[0][0])
        terms = []
        for r in rows[1:]:
            if len(r) != dim + 2:
                raise FieldError(f"term line {' '.join(r)!r} needs {dim} frequencies, amplitude, phase")
            terms.append((tuple(int(x) for x in r[:dim]), float(r[dim]), float(r[dim + 1])))
    except ValueError as exc:
        if isinstance(exc, FieldError):
            raise
        raise FieldError(f"malformed field specification: {exc}") from exc
    if not terms:
        raise FieldError("field specification has no terms")
    return TrigField(dim, [t[0] for t in terms], [t[1] for t in terms], [t[2] for t in terms])


def load_field(spec: str) -> TrigField:
    """Resolve a built-in name (``cos3``, ``cos3d``) or read a field file."""
    if spec in BUILTIN_FIELDS:
        return BUILTIN_FIELDS[spec]()
    path = Path(spec)
    if not path.exists():
        raise FieldError(f"unknown field {spec!r} (not a built-in name or an existing file)")
    return parse_field(path.read_text())


@dataclass(frozen=True)
class PseudoperiodicSpec:
    """Linear covector plus periodic part: ``x -> <linear, x> + periodic(x)``."""

    linear: np.ndarray
    periodic: TrigField

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=float).reshape(-1)
        if len(lin) != self.periodic.dimension:
            raise FieldError("linear part and periodic part have different dimensions")
        lin.setflags(write=False)
        object.__setattr__(self, "linear", lin)

    @property
    def dimension(self) -> int:
        return self.periodic.dimension

    @property
    def plane_frequencies(self) -> np.ndarray:
        return self.periodic.freqs.astype(float)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.linear + self.periodic.value(x)

    def gradient(self, x):
        return self.linear + self.periodic.gradient(x)

    def hessian(self, x):
        return self.periodic.hessian(x)

    __call__ = value


def _fit_periodic(residual: Callable[[np.ndarray], np.ndarray], dim: int, max_freq: int) -> TrigField:
    """Recover a cosine sum from samples of a periodic function by FFT."""
    n = 2 * max_freq + 2
    g = np.arange(n) / n
    pts = np.stack(np.meshgrid(*([g] * dim), indexing="ij"), -1)
    coef = np.fft.fftn(residual(pts)) / n ** dim
    terms = []
    for idx in itertools.product(range(n), repeat=dim):
        k = tuple(i if i <= n // 2 else i - n for i in idx)
        nz = next((x for x in k if x != 0), 0)
        if nz < 0 or abs(coef[idx]) < 1e-13:
            continue
        z = coef[idx] if nz == 0 else 2 * coef[idx]  # fold the conjugate partner in
        if nz == 0 or abs(z.imag) < 1e-12:
            terms.append((k, float(z.real), 0.0))
        else:
            terms.append((k, float(abs(z)), float(np.angle(z))))
    if not terms:
        terms = [((0,) * dim, 0.0, 0.0)]
    return TrigField.from_terms(terms)


def decompose(source, dimension: int | None = None, *, max_freq: int = 8,
              tol: float = 1e-9, n_probe: int = 64, seed: int = 0) -> PseudoperiodicSpec:
    """Split a pseudoperiodic function into linear and periodic parts.

    Args:
        source: Either a ``(linear, periodic)`` pair or a vectorized callable
            taking points of shape (..., dimension).
        dimension: Required when ``source`` is a callable.
        max_freq: Largest harmonic kept when the periodic part is re-fitted.
        tol: Allowed defect of periodicity and of the refit.
        n_probe: Number of random base points used to measure increments.
        seed: RNG seed for the probe points.

    Returns:
        The decomposition; the linear part is the mean lattice increment.

    Raises:
        FieldError: If the residual is not periodic or not representable.
    """
    if isinstance(source, tuple):
        linear, periodic = source
        return PseudoperiodicSpec(np.asarray(linear, dtype=float), periodic)
    if dimension is None:
        raise FieldError("dimension is required for a sampled function")
    f = source
    rng = np.random.default_rng(seed)
    x = rng.random((n_probe, dimension))
    eye = np.eye(dimension)
    incr = np.stack([f(x + eye[i]) - f(x) for i in range(dimension)], axis=-1)
    linear = incr.mean(axis=0)
    if np.max(np.abs(incr - linear)) > tol * max(1.0, np.abs(linear).max()):
        raise FieldError("lattice increments are not constant: input is not pseudoperiodic")

    def residual(p):
        return f(p) - p @ linear

    periodic = _fit_periodic(residual, dimension, max_freq)
    check = rng.random((n_probe, dimension))
    if np.max(np.abs(periodic.value(check) - residual(check))) > 10 * tol:
        raise FieldError(f"periodic residual is not a cosine sum with frequencies up to {max_freq}")
    return PseudoperiodicSpec(linear, periodic)


@dataclass(frozen=True)
class PlaneEmbedding:
    """Affine map ``t -> base + t @ directions`` from R^d into R^m (d = 1 or 2)."""

    base: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).reshape(-1)
        dirs = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if dirs.shape[1] != len(base):
            raise FieldError("direction vectors and base point have different dimensions")
        if np.linalg.matrix_rank(dirs, tol=1e-12 * max(1.0, np.abs(dirs).max())) < len(dirs):
            raise FieldError("degenerate plane: spanning directions are linearly dependent")
        for name, arr in (("base", base), ("directions", dirs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def plane(cls, base, u, v) -> "PlaneEmbedding":
        return cls(base, np.array([u, v], dtype=float))

    @property
    def dimension(self) -> int:
        return len(self.base)

    @property
    def rank(self) -> int:
        return len(self.directions)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.rank == 1 and (t.ndim == 0 or t.shape[-1] != 1):
            t = t[..., None]
        return self.base + t @ self.directions


@dataclass(frozen=True)
class PlaneFunction:
    """Restriction of a periodic field to an affine plane or line."""

    field: TrigField
    embedding: PlaneEmbedding

    @property
    def dimension(self) -> int:
        return self.embedding.rank

    @property
    def plane_frequencies(self) -> np.ndarray:
        return frequency_generators(self.field, self.embedding)

    def value(self, t):
        return self.field.value(self.embedding(t))

    def gradient(self, t):
        return self.field.gradient(self.embedding(t)) @ self.embedding.directions.T

    def hessian(self, t):
        d = self.embedding.directions
        return d @ self.field.hessian(self.embedding(t)) @ d.T

    __call__ = value


def restrict_to_plane(field: TrigField, plane: PlaneEmbedding) -> PlaneFunction:
    """Quasiperiodic restriction of ``field`` to ``plane``."""
    if plane.dimension != field.dimension:
        raise FieldError("plane and field dimensions differ")
    return PlaneFunction(field, plane)


def frequency_generators(field: TrigField, plane: PlaneEmbedding) -> np.ndarray:
    """Projections of the nonzero field frequencies onto the plane directions.

    Returns an array of shape (n, plane.rank): row i holds <k_i, u_j>.
    """
    if plane.dimension != field.dimension:
        raise FieldError("plane and field dimensions differ")
    k = field.freqs[np.any(field.freqs != 0, axis=1)].astype(float)
    return k @ plane.directions.T


def rational_rank(vectors, max_coeff: int = 12, tol: float = 1e-9) -> int:
    """Rank over Q of real vectors, detecting integer relations with small coefficients.

    A family is declared dependent when some nonzero integer combination with
    coefficients bounded by ``max_coeff`` vanishes to ``tol``.  Greedy over the
    rows, so the cost is (2 max_coeff + 1)^rank per added row.
    """
    vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
    basis: list[np.ndarray] = []
    rng = range(-max_coeff, max_coeff + 1)
    for v in vecs:
        dependent = not np.any(np.abs(v) > tol)
        if not dependent and basis:
            B = np.array(basis)
            for coeffs in itertools.product(rng, repeat=len(basis)):
                c = np.array(coeffs, dtype=float)
                for m in range(1, max_coeff + 1):
                    if np.all(np.abs(m * v - c @ B) <= tol * max(1.0, m)):
                        dependent = True
                        break
                if dependent:
                    break
        if not dependent:
            basis.append(v)
    return len(basis)
