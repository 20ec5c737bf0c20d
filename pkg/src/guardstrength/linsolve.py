"""Exact solution of sparse rational systems A x = b.

Systems built here are nonsingular M-matrices (I - T with T substochastic and
leaking), so elimination needs no pivoting. Large systems go to python-flint's
dense rational solver when it is installed.
"""

from __future__ import annotations

from fractions import Fraction

try:  # optional accelerator
    import flint
except ImportError:  # pragma: no cover
    flint = None

FLINT_THRESHOLD = 64
FLINT_MIN_DEGREE = 3  # sparser systems (paths, tridiagonal) barely fill in

ZERO = Fraction(0)


class SingularSystem(ArithmeticError):
    pass


def solve_sparse_python(rows: list[dict], b: list) -> list[Fraction]:
    n = len(rows)
    rows = [dict(r) for r in rows]
    b = list(b)
    below = [set() for _ in range(n)]
    for i, r in enumerate(rows):
        for j in r:
            if j < i:
                below[j].add(i)
    for k in range(n):
        pivot = rows[k].get(k, ZERO)
        if pivot == 0:
            raise SingularSystem(f"zero pivot at {k}")
        prow = [(j, v) for j, v in rows[k].items() if j > k]
        bk = b[k]
        for i in sorted(below[k]):
            ri = rows[i]
            a = ri.pop(k, None)
            if not a:
                continue
            factor = a / pivot
            for j, v in prow:
                nv = ri.get(j, ZERO) - factor * v
                if nv:
                    if j not in ri and j < i:
                        below[j].add(i)
                    ri[j] = nv
                else:
                    ri.pop(j, None)
            if bk:
                b[i] -= factor * bk
        below[k] = set()
    x = [ZERO] * n
    for k in range(n - 1, -1, -1):
        acc = b[k]
        for j, v in rows[k].items():
            if j > k:
                acc -= v * x[j]
        x[k] = acc / rows[k][k]
    return x


def solve_sparse_flint(rows: list[dict], b: list) -> list[Fraction]:
    n = len(rows)
    A = flint.fmpq_mat(n, n)
    B = flint.fmpq_mat(n, 1)
    for i, r in enumerate(rows):
        for j, v in r.items():
            A[i, j] = flint.fmpq(v.numerator, v.denominator)
        B[i, 0] = flint.fmpq(b[i].numerator, b[i].denominator)
    try:
        X = A.solve(B)
    except ZeroDivisionError as e:
        raise SingularSystem(str(e)) from None
    out = []
    for i in range(n):
        q = X[i, 0]
        out.append(Fraction(int(q.p), int(q.q)))
    return out


def solve_sparse(rows: list[dict], b: list, backend: str = "auto") -> list[Fraction]:
    """Solve sum_j rows[i][j] * x[j] = b[i] exactly."""
    if not rows:
        return []
    if backend == "auto":
        n = len(rows)
        avg = sum(len(r) for r in rows) / n
        dense_worth = n > FLINT_THRESHOLD and avg > FLINT_MIN_DEGREE
        backend = "flint" if flint is not None and dense_worth else "python"
    if backend == "flint":
        if flint is None:
            raise RuntimeError("python-flint is not installed")
        return solve_sparse_flint(rows, b)
    return solve_sparse_python(rows, b)
