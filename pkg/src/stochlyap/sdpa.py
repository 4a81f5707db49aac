"""SDPA sparse-format export of the synthesis feasibility problem.

The exported problem is the standard SDPA primal

    maximize    c^T x        (c = 0: pure feasibility)
    subject to  sum_a x_a F_a - F0  >=  0   (block diagonal)

with two PSD blocks:

* block 1 (size ``n + (n+m)n^2``): the synthesis inequality,
  ``F_a = S_a`` (the variable coefficient blocks) and ``F0 = margin I``;
* block 2 (size ``n``): the explicit ``X >= margin I`` condition,
  ``F_a`` the elementary symmetric matrix for X variables, zero for Y
  variables, and ``F0 = margin I``.

Variable order is the upper triangle of ``X`` row-major followed by
``Y`` row-major.  Entry lines are ``matno blkno i j value`` with 1-based
indices, upper-triangle entries only, values printed with 17 significant
digits; ``matno`` 0 denotes ``F0``.
"""

from __future__ import annotations

import os
import re
import tempfile

import numpy as np

from .errors import BackendFailure
from .synthesis import LmiProblem, _x_index_pairs


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _entries(matno: int, blkno: int, M: np.ndarray, lines: list) -> None:
    rows, cols = np.nonzero(np.triu(M))
    for i, j in zip(rows, cols):
        lines.append(f"{matno} {blkno} {i + 1} {j + 1} {_fmt(M[i, j])}")


def write_problem(problem: LmiProblem, path: str) -> None:
    """Write the feasibility problem as an SDPA sparse ``.dat-s`` file."""
    n = problem.n
    nvars = problem.num_vars
    lines = [
        '"stochlyap synthesis feasibility: block1 = rate inequality, '
        'block2 = X - margin*I"',
        f"{nvars} = mDIM",
        "2 = nBLOCK",
        f"{problem.dim} {n} = bLOCKsTRUCT",
        " ".join(["0.0"] * nvars),
    ]
    _entries(0, 1, problem.margin * np.eye(problem.dim), lines)
    _entries(0, 2, problem.margin * np.eye(n), lines)
    x_pairs = _x_index_pairs(n)
    for a in range(nvars):
        _entries(a + 1, 1, problem.basis[a], lines)
        if a < len(x_pairs):
            i, j = x_pairs[a]
            E = np.zeros((n, n))
            E[i, j] += 1.0
            E[j, i] += 1.0 if i != j else 0.0
            _entries(a + 1, 2, E, lines)
    payload = "\n".join(lines) + "\n"
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_problem(path: str):
    """Parse a ``.dat-s`` file back into dense matrices.

    Returns ``(c, F, block_sizes)`` where ``F[0]`` is the constant
    matrix and ``F[a]`` (``a >= 1``) the variable coefficient matrices,
    each a list with one dense array per block.  Intended for testing
    the writer and for feeding external solvers.
    """
    tokens: list[str] = []
    with open(path) as f:
        for line in f:
            s = line.strip()
            if not s or s.startswith('"') or s.startswith("*"):
                continue
            s = s.split("=")[0]
            for ch in ",{}()":
                s = s.replace(ch, " ")
            tokens.extend(s.split())
    pos = 0

    def take(k):
        nonlocal pos
        out = tokens[pos: pos + k]
        pos += k
        return out

    m = int(take(1)[0])
    nblocks = int(take(1)[0])
    sizes = [abs(int(float(t))) for t in take(nblocks)]
    c = np.array([float(t) for t in take(m)])
    F = [[np.zeros((s, s)) for s in sizes] for _ in range(m + 1)]
    while pos + 5 <= len(tokens):
        matno, blk, i, j, val = take(5)
        matno, blk, i, j = int(matno), int(blk), int(i), int(j)
        v = float(val)
        F[matno][blk - 1][i - 1, j - 1] = v
        F[matno][blk - 1][j - 1, i - 1] = v
    return c, F, sizes


def read_solution_vector(path: str, num_vars: int) -> np.ndarray:
    """Extract the primal variable vector from an SDPA solver output file.

    Accepts the standard SDPA output (an ``xVec = {...}`` section) or a
    plain text file of ``num_vars`` whitespace/comma separated floats.
    """
    with open(path) as f:
        text = f.read()
    match = re.search(r"xVec\s*=\s*\{(.*?)\}", text, re.DOTALL)
    if match:
        body = match.group(1)
    else:
        body = text
    values = re.findall(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?", body)
    if len(values) < num_vars:
        raise BackendFailure(
            f"solution file has {len(values)} numbers, expected {num_vars}"
        )
    return np.array([float(v) for v in values[:num_vars]])
