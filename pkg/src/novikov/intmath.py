"""Exact integer-lattice helpers used throughout the package.

Everything here works on plain Python ints so that arbitrarily large
entries (deep gasket levels, long exact traces) never wrap around.
"""
from __future__ import annotations

from fractions import Fraction
from functools import reduce
from math import gcd
from typing import Iterable, Sequence


def vgcd(v: Iterable[int]) -> int:
    return reduce(gcd, (abs(int(x)) for x in v), 0)


def sign_normalize(v: Sequence) -> tuple:
    """Flip sign so that the first nonzero entry is positive."""
    for x in v:
        if x != 0:
            return tuple(v) if x > 0 else tuple(-y for y in v)
    return tuple(v)


def primitive(v: Sequence[int], normalize_sign: bool = True) -> tuple[int, ...]:
    """Indivisible integer vector on the ray (or line, with ``normalize_sign``) of ``v``."""
    g = vgcd(v)
    if g == 0:
        raise ValueError("zero vector has no primitive representative")
    w = tuple(int(x) // g for x in v)
    return sign_normalize(w) if normalize_sign else w


def dot(a: Sequence, b: Sequence):
    return sum(x * y for x, y in zip(a, b))


def cross(a: Sequence, b: Sequence) -> tuple:
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


def add(a: Sequence, b: Sequence) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Sequence, b: Sequence) -> tuple:
    return tuple(x - y for x, y in zip(a, b))


def scale(k, a: Sequence) -> tuple:
    return tuple(k * x for x in a)


def egcd(a: int, b: int) -> tuple[int, int, int]:
    """Return (g, x, y) with a*x + b*y == g == gcd(a, b) >= 0."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        a, x0, y0 = -a, -x0, -y0
    return a, x0, y0


def int_rank(vectors: Iterable[Sequence[int]]) -> int:
    """Rank over Q of a family of integer vectors (fraction-free elimination)."""
    rows = [list(map(int, v)) for v in vectors]
    rows = [r for r in rows if any(r)]
    if not rows:
        return 0
    ncol = len(rows[0])
    rank = 0
    for col in range(ncol):
        piv = next((i for i in range(rank, len(rows)) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        p = rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [p[col] * x - f * y for x, y in zip(rows[i], p)]
                g = vgcd(rows[i])
                if g > 1:
                    rows[i] = [x // g for x in rows[i]]
        rank += 1
        if rank == len(rows):
            break
    return rank


def independent_subset(vectors: Iterable[Sequence[int]]) -> list[tuple[int, ...]]:
    """Greedy maximal linearly independent subfamily, in input order."""
    basis: list[tuple[int, ...]] = []
    for v in vectors:
        v = tuple(int(x) for x in v)
        if not any(v):
            continue
        if int_rank(basis + [v]) > len(basis):
            basis.append(v)
    return basis


def normal_of_span(vectors: Iterable[Sequence[int]]) -> tuple[int, int, int] | None:
    """Indivisible normal of the span of 3-vectors when that span has rank 2.

    Returns None when the rank is not exactly two.
    """
    basis = independent_subset(vectors)
    if len(basis) != 2:
        return None
    return primitive(cross(basis[0], basis[1]))


def reduce_basis_2d(u: Sequence[int], v: Sequence[int]) -> tuple[tuple, tuple]:
    """Lagrange-Gauss reduction of a rank-2 integer lattice basis."""
    u, v = tuple(u), tuple(v)
    if dot(u, u) > dot(v, v):
        u, v = v, u
    while True:
        nu = dot(u, u)
        q = Fraction(dot(u, v), nu)
        k = round(q)
        v = sub(v, scale(k, u))
        if dot(v, v) >= nu:
            return u, v
        u, v = v, u


def unimodular_frame(B: Sequence[int]) -> tuple[tuple, tuple, tuple]:
    """Integer basis (l1, l2, m) of Z^3 with <B,l1> = <B,l2> = 0 and <B,m> = 1.

    ``B`` must be indivisible.  The pair (l1, l2) is Gauss-reduced and ``m`` is
    shortened modulo the plane lattice, so det[l1 l2 m] = +-1.
    """
    B = tuple(int(x) for x in B)
    if vgcd(B) != 1:
        raise ValueError(f"direction {B} is not indivisible")
    # column operations on the row vector B, tracked in U, until B U = (1, 0, 0)
    U = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    row = list(B)

    def colop(i, j, q):  # col_i -= q col_j
        row[i] -= q * row[j]
        for r in range(3):
            U[r][i] -= q * U[r][j]

    def swap(i, j):
        row[i], row[j] = row[j], row[i]
        for r in range(3):
            U[r][i], U[r][j] = U[r][j], U[r][i]

    while sum(1 for x in row if x != 0) > 1 or row[0] == 0:
        nz = [i for i in range(3) if row[i] != 0]
        p = min(nz, key=lambda i: abs(row[i]))
        if p != 0:
            swap(0, p)
        for i in (1, 2):
            if row[i] != 0:
                colop(i, 0, row[i] // row[0])
    if row[0] < 0:
        for r in range(3):
            U[r][0] = -U[r][0]
        row[0] = -row[0]
    cols = [tuple(U[r][c] for r in range(3)) for c in range(3)]
    m, l1, l2 = cols
    l1, l2 = reduce_basis_2d(l1, l2)
    # shorten m by the nearest plane-lattice combination (least squares on l1, l2)
    g11, g12, g22 = dot(l1, l1), dot(l1, l2), dot(l2, l2)
    det = g11 * g22 - g12 * g12
    b1, b2 = dot(m, l1), dot(m, l2)
    a1 = round(Fraction(b1 * g22 - b2 * g12, det))
    a2 = round(Fraction(b2 * g11 - b1 * g12, det))
    m = sub(m, add(scale(a1, l1), scale(a2, l2)))
    assert dot(B, l1) == 0 and dot(B, l2) == 0 and dot(B, m) == 1
    return l1, l2, m


def integer_kernel(rows: Sequence[Sequence[int]], n: int) -> list[tuple[int, ...]]:
    """Basis (over Q, integral vectors) of {x in Z^n : rows @ x = 0}."""
    rows = [list(map(Fraction, r)) for r in rows if any(r)]
    pivots: list[int] = []
    r = 0
    for col in range(n):
        piv = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        p = rows[r][col]
        rows[r] = [x / p for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(col)
        r += 1
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fcol in free:
        x = [Fraction(0)] * n
        x[fcol] = Fraction(1)
        for i, pc in enumerate(pivots):
            x[pc] = -rows[i][fcol]
        den = reduce(lambda a, b: a * b // gcd(a, b), (q.denominator for q in x), 1)
        v = [int(q * den) for q in x]
        g = vgcd(v)
        basis.append(tuple(c // g for c in v))
    return basis
