"""State-feedback synthesis through the rearranged-factor block inequality.

With the stacked factors ``GpA``/``GpB`` of the open-loop second moment,
a gain rendering the closed loop quadratically stable at rate ``lambda``
exists iff the block matrix

    [[lambda^2 X,  (GpA X + GpB Y)^T],
     [GpA X + GpB Y,  X kron I_{(n+m)n}]]

is positive definite for some symmetric ``X`` and some ``Y``; then
``F = Y X^{-1}``.  The inequality is linear and homogeneous in
``(X, Y)``, so feasibility is scale-free and any strictly positive
definite point can be rescaled to a requested margin.

The reference solver alternates projections between the margin-shifted
PSD cone and the variable subspace (Dykstra correction on the cone).
Because the feasible cone can meet the subspace at a very shallow angle,
the iteration is seeded with candidate points built from the spectral
analysis machinery: candidate gains are scored by the exact closed-loop
decay rate, and any gain strictly beating the target rate yields an
exactly feasible point via the Lyapunov linear solve.  Seeds that
already satisfy the inequality end the iteration immediately; otherwise
Dykstra runs from the best seed up to the iteration cap and declares
infeasibility on stall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (
    AnalysisOnlyModel,
    BackendFailure,
    DimensionMismatch,
    NotStabilizable,
    StochLyapError,
    VerificationMismatch,
)
from .moments import (
    RearrangedFactors,
    SecondMomentData,
    closed_loop_second_moment,
    factorize,
)
from .analysis import StabilityReport, stability_report
from .sysmodel import SystemModel

#: Dykstra iteration cap for the reference backend.
ITERATION_CAP = 50_000

_STALL_WINDOW = 600
_STALL_FACTOR = 0.95
# strict-PD acceptance for subspace iterates: far above the ~1e-15 noise
# floor of eigvalsh yet permissive enough for thin feasibility margins
_PD_REL = 1e-11


def default_margin(data: SecondMomentData) -> float:
    """Default strictness margin, scaled to the moment data."""
    return 1e-6 * (1.0 + float(np.linalg.norm(data.g2)))


def _x_index_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i, n)]


def split_vars(v: np.ndarray, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Unpack the variable vector into ``(X, Y)``.

    Layout: upper triangle of ``X`` row-major, then ``Y`` row-major.
    """
    v = np.asarray(v, dtype=float)
    X = np.zeros((n, n))
    for k, (i, j) in enumerate(_x_index_pairs(n)):
        X[i, j] = X[j, i] = v[k]
    Y = v[n * (n + 1) // 2:].reshape(m, n)
    return X, Y


def join_vars(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pack ``(X, Y)`` into the variable vector (inverse of :func:`split_vars`)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    return np.concatenate(
        [np.array([X[i, j] for i, j in _x_index_pairs(n)]), np.asarray(Y, float).ravel()]
    )


@dataclass(frozen=True, eq=False)
class LmiProblem:
    """Assembled synthesis inequality ``M(vars) >= margin * I``.

    ``basis`` stacks one symmetric coefficient block per scalar variable
    in the :func:`split_vars` layout; the map ``vars -> M(vars)`` is
    linear with no constant term.
    """

    basis: np.ndarray
    margin: float
    lam: float
    n: int
    m: int
    factors: RearrangedFactors

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def num_vars(self) -> int:
        return self.basis.shape[0]

    def assemble_at(self, v: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(v, float), self.basis, axes=1)


def assemble(factors: RearrangedFactors, lam: float, margin: float) -> LmiProblem:
    """Build the block-inequality basis for one decay rate.

    Parameters
    ----------
    factors : RearrangedFactors
        From :func:`stochlyap.moments.factorize` of synthesis-mode data.
    lam : float
        Target decay rate (enters only the top-left block).
    margin : float
        Strictness margin; the solved condition is ``M(v) >= margin I``.
    """
    n, m = factors.n, factors.m
    if m == 0 or factors.gpb is None:
        raise AnalysisOnlyModel("synthesis needs an input channel (m >= 1)")
    w = (n + m) * n
    D = n + w * n
    blocks = []
    for i, j in _x_index_pairs(n):
        E = np.zeros((n, n))
        E[i, j] += 1.0
        E[j, i] += 1.0 if i != j else 0.0
        S = np.zeros((D, D))
        S[:n, :n] = lam**2 * E
        S[n:, :n] = factors.gpa @ E
        S[:n, n:] = S[n:, :n].T
        S[n:, n:] = np.kron(E, np.eye(w))
        blocks.append(S)
    for q in range(m):
        for j in range(n):
            E = np.zeros((m, n))
            E[q, j] = 1.0
            S = np.zeros((D, D))
            S[n:, :n] = factors.gpb @ E
            S[:n, n:] = S[n:, :n].T
            blocks.append(S)
    return LmiProblem(np.stack(blocks), float(margin), float(lam), n, m, factors)


@dataclass(frozen=True, eq=False)
class FeasibilityResult:
    """Outcome of one feasibility solve."""

    status: str  # "feasible" | "infeasible" | "exported"
    X: np.ndarray | None
    Y: np.ndarray | None
    iterations: int
    backend: str

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def closed_loop_rate(factors: RearrangedFactors, F: np.ndarray) -> float:
    """Exact closed-loop minimal decay rate for a candidate gain.

    Works directly on the stacked factors: the closed-loop factor is
    ``H = GpA + GpB F`` and the closed-loop entry products are the block
    Gram matrix of ``H``.
    """
    n, m = factors.n, factors.m
    F = np.atleast_2d(np.asarray(F, float))
    if F.shape != (m, n):
        raise DimensionMismatch(f"gain shape {F.shape} != ({m}, {n})")
    w = (n + m) * n
    H = (factors.gpa + factors.gpb @ F).reshape(n, w, n)
    G4 = np.einsum("iwj,kwl->ijkl", H, H)
    M = G4.transpose(1, 3, 0, 2).reshape(n * n, n * n)
    return float(np.sqrt(np.abs(np.linalg.eigvals(M)).max()))


def _certificate_point(factors: RearrangedFactors, F: np.ndarray, lam: float):
    """Exact feasible ``(X, Y)`` from a gain whose closed-loop rate beats ``lam``.

    Solves ``lam^2 P - E[A_cl^T P A_cl] = I`` for the closed loop and
    returns ``X = P^{-1}``, ``Y = F X``; None when the solve fails or
    yields a non-PD ``P``.
    """
    n, m = factors.n, factors.m
    F = np.atleast_2d(np.asarray(F, float))
    w = (n + m) * n
    H = (factors.gpa + factors.gpb @ F).reshape(n, w, n)
    G4 = np.einsum("iwj,kwl->ijkl", H, H)
    M = G4.transpose(1, 3, 0, 2).reshape(n * n, n * n)
    try:
        vec = np.linalg.solve(lam**2 * np.eye(n * n) - M, np.eye(n).ravel())
    except np.linalg.LinAlgError:
        return None
    P = vec.reshape(n, n)
    P = (P + P.T) / 2.0
    if np.linalg.eigvalsh(P)[0] <= 0:
        return None
    X = np.linalg.inv(P)
    X = (X + X.T) / 2.0
    return join_vars(X, F @ X)


def candidate_gains(data: SecondMomentData, refine: bool = True) -> list[np.ndarray]:
    """Candidate gains for seeding the feasibility solver.

    Includes the zero gain, the factor least-squares gain (minimizer of
    the mean squared closed-loop coefficient norm), a Riccati gain for
    the mean system when it exists, and optionally a direct numerical
    minimizer of the exact closed-loop rate.
    """
    factors = factorize(data)
    n, m = data.n, data.m
    cands = [np.zeros((m, n))]
    f_lsq = -np.linalg.lstsq(factors.gpb, factors.gpa, rcond=None)[0]
    cands.append(f_lsq)
    try:
        S = scipy.linalg.solve_discrete_are(
            data.mean_a, data.mean_b, np.eye(n), np.eye(m)
        )
        BtSB = data.mean_b.T @ S @ data.mean_b
        cands.append(-np.linalg.solve(np.eye(m) + BtSB, data.mean_b.T @ S @ data.mean_a))
    except Exception:
        pass
    if refine:
        best = min(cands, key=lambda F: closed_loop_rate(factors, F))
        res = scipy.optimize.minimize(
            lambda f: closed_loop_rate(factors, f.reshape(m, n)),
            best.ravel(),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 800 * m * n,
                     "maxfev": 800 * m * n},
        )
        res = scipy.optimize.minimize(
            lambda f: closed_loop_rate(factors, f.reshape(m, n)),
            res.x,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 800 * m * n,
                     "maxfev": 800 * m * n},
        )
        cands.insert(0, res.x.reshape(m, n))
    return cands


def _seed_points(problem: LmiProblem, warm_start, seed_gains, default_seeds):
    n, m = problem.n, problem.m
    seeds = []
    if warm_start is not None:
        seeds.append(np.asarray(warm_start, float))
    if default_seeds:
        seeds.append(join_vars(np.eye(n), np.zeros((m, n))))
        # least-squares fit of the identity within the subspace
        Bmat = problem.basis.reshape(problem.num_vars, -1).T
        v_ls = np.linalg.lstsq(Bmat, np.eye(problem.dim).ravel(), rcond=None)[0]
        seeds.append(v_ls)
    for F in seed_gains:
        if closed_loop_rate(problem.factors, F) < problem.lam * (1.0 - 1e-12):
            v = _certificate_point(problem.factors, F, problem.lam)
            if v is not None:
                seeds.append(v)
    if not seeds:
        seeds.append(join_vars(np.eye(n), np.zeros((m, n))))
    return seeds


def _rescaled_if_pd(problem: LmiProblem, v: np.ndarray):
    """Rescale a strictly PD point onto the margin; None if not strictly PD."""
    Mv = problem.assemble_at(v)
    scale = float(np.linalg.norm(Mv))
    if scale == 0.0:
        return None
    mineig = float(np.linalg.eigvalsh(Mv)[0])
    if mineig < _PD_REL * scale:
        return None
    c = problem.margin * max(1.0, problem.lam**2) / mineig
    return v * c


def _solve_reference(problem: LmiProblem, warm_start, seed_gains, cap: int,
                     default_seeds: bool = True):
    seeds = _seed_points(problem, warm_start, seed_gains, default_seeds)
    scored = []
    for v in seeds:
        out = _rescaled_if_pd(problem, v)
        if out is not None:
            return FeasibilityResult("feasible", *split_vars(out, problem.n, problem.m), 0, "ref")
        Mv = problem.assemble_at(v)
        nv = float(np.linalg.norm(Mv))
        scored.append((-(np.linalg.eigvalsh(Mv)[0] / nv) if nv > 0 else np.inf, v))
    start = min(scored, key=lambda t: t[0])[1]

    # Dykstra alternating projections: correction on the cone only,
    # plain projection on the (linear) variable subspace.  An SVD basis
    # keeps the projection correct when basis blocks are dependent
    # (e.g. zero input columns).
    Bmat = problem.basis.reshape(problem.num_vars, -1).T
    U_b, s_b, _ = np.linalg.svd(Bmat, full_matrices=False)
    Q = U_b[:, s_b > 1e-12 * (s_b[0] if s_b.size else 1.0)]
    pinv = np.linalg.pinv(Bmat)
    D = problem.dim
    y = problem.assemble_at(start).ravel()
    p = np.zeros_like(y)
    best_gap = np.inf
    since_improve = 0
    for it in range(1, cap + 1):
        wvec = y + p
        W = wvec.reshape(D, D)
        W = (W + W.T) / 2.0
        ew, U = np.linalg.eigh(W)
        z = ((U * np.maximum(ew, problem.margin)) @ U.T).ravel()
        p = wvec - z
        y = Q @ (Q.T @ z)
        if it % 10 == 0 or it == 1:
            v = pinv @ y
            out = _rescaled_if_pd(problem, v)
            if out is not None:
                return FeasibilityResult(
                    "feasible", *split_vars(out, problem.n, problem.m), it, "ref"
                )
            gap = float(np.linalg.norm(z - y)) / (1.0 + float(np.linalg.norm(z)))
            if gap < best_gap * _STALL_FACTOR:
                best_gap = gap
                since_improve = 0
            else:
                since_improve += 10
                if since_improve >= _STALL_WINDOW:
                    return FeasibilityResult("infeasible", None, None, it, "ref")
    return FeasibilityResult("infeasible", None, None, cap, "ref")


def solve_feasibility(
    problem: LmiProblem,
    backend: str = "ref",
    warm_start: np.ndarray | None = None,
    seed_gains=None,
    iteration_cap: int = ITERATION_CAP,
    default_seeds: bool = True,
) -> FeasibilityResult:
    """Find ``(X, Y)`` with ``M(X, Y) >= margin/2 * I``, or declare infeasibility.

    Parameters
    ----------
    problem : LmiProblem
    backend : str
        ``"ref"`` runs the seeded Dykstra iteration described in the
        module docstring.  ``"sdpa-export:<path>"`` writes the problem
        in SDPA sparse format to ``<path>`` and returns an ``"exported"``
        result; ``"sdpa-export:<path>:<solution>"`` additionally parses
        an externally produced solution file and validates it.
    warm_start : array_like, optional
        Variable vector used as an extra seed (e.g. from a neighbouring
        rate during bisection).
    seed_gains : sequence of arrays, optional
        Candidate gains scored by exact closed-loop rate; any gain that
        beats the target rate yields an immediately feasible point.
        Defaults to the zero and factor least-squares gains.
    iteration_cap : int
        Dykstra iteration budget for the reference backend.
    default_seeds : bool
        Include the identity and least-squares-identity seeds; disable
        to exercise the bare projection iteration.

    Returns
    -------
    FeasibilityResult
        ``feasible`` results satisfy ``min-eig M(X, Y) >= margin/2`` and
        ``X >= margin/2 * I``; ``infeasible`` carries no certificate.
    """
    if backend == "ref":
        if seed_gains is None:
            f_lsq = -np.linalg.lstsq(problem.factors.gpb, problem.factors.gpa, rcond=None)[0]
            seed_gains = [np.zeros((problem.m, problem.n)), f_lsq]
        return _solve_reference(problem, warm_start, seed_gains, iteration_cap, default_seeds)
    if backend.startswith("sdpa-export:"):
        from . import sdpa

        parts = backend.split(":", 2)
        path = parts[1]
        if not path:
            raise BackendFailure("sdpa-export backend needs a target path")
        sdpa.write_problem(problem, path)
        if len(parts) == 3:
            v = sdpa.read_solution_vector(parts[2], problem.num_vars)
            out = _rescaled_if_pd(problem, v)
            if out is None:
                raise BackendFailure("imported solution is not strictly feasible")
            return FeasibilityResult(
                "feasible", *split_vars(out, problem.n, problem.m), 0, backend
            )
        return FeasibilityResult("exported", None, None, 0, backend)
    raise BackendFailure(f"unknown backend {backend!r}")


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    """Gain synthesis outcome.

    ``trace`` records the bisection grid as ``(lambda, feasible,
    iterations)`` triples; ``closed_loop_report`` is the independent
    verification of ``F`` on the same moment data.
    """

    X: np.ndarray
    Y: np.ndarray
    F: np.ndarray
    lam: float
    backend: str
    trace: tuple
    closed_loop_report: StabilityReport

    def to_obj(self) -> dict:
        return {
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
            "F": self.F.tolist(),
            "lambda": self.lam,
            "backend": self.backend,
            "trace": [list(t) for t in self.trace],
            "closed_loop_report": self.closed_loop_report.to_obj(),
        }


def verify_gain(data: SecondMomentData, F: np.ndarray, tol: float = 1e-6) -> StabilityReport:
    """Independent stability analysis of a gain on open-loop moment data.

    The closed-loop second moment is derived algebraically from ``G2``
    and ``F`` (no re-sampling), then analyzed spectrally.
    """
    return stability_report(closed_loop_second_moment(data, F), tol)


def synthesize_min_lambda(
    model: SystemModel,
    data: SecondMomentData,
    lambda_tol: float = 1e-3,
    backend: str = "ref",
    margin: float | None = None,
) -> SynthesisResult:
    """Bisect the decay rate and return the gain at the smallest feasible one.

    Bisection runs over ``(0, 1]``; only rates below one certify
    stability.  If the inequality is infeasible at ``lambda = 1``, rates
    up to 2 are probed purely for diagnostics and
    :class:`NotStabilizable` is raised.  The returned gain is verified
    against the same moment data; a closed-loop rate exceeding the
    achieved one by more than ``5 * lambda_tol`` raises
    :class:`VerificationMismatch`.

    Parameters
    ----------
    model : SystemModel
        Synthesis-mode model (``m >= 1``); dimensions must match ``data``.
    data : SecondMomentData
        Open-loop second-moment data (analytic or Monte-Carlo).
    lambda_tol : float
        Bisection width, in ``[1e-4, 1e-2]``.
    backend : str
        Feasibility backend; bisection requires ``"ref"``.
    margin : float, optional
        Strictness margin, defaulting to :func:`default_margin`.
    """
    if model.m == 0:
        raise AnalysisOnlyModel("synthesis needs an input channel (m >= 1)")
    if (model.n, model.m) != (data.n, data.m):
        raise DimensionMismatch("model and moment data dimensions disagree")
    if not 1e-4 <= lambda_tol <= 1e-2:
        raise StochLyapError("lambda_tol must lie in [1e-4, 1e-2]")
    if backend != "ref":
        raise BackendFailure("bisection requires the reference backend")
    if margin is None:
        margin = default_margin(data)

    factors = factorize(data)
    gains = candidate_gains(data)
    trace = []
    warm = None

    def probe(lam):
        nonlocal warm
        problem = assemble(factors, lam, margin)
        res = solve_feasibility(problem, backend, warm_start=warm, seed_gains=gains)
        trace.append((lam, res.feasible, res.iterations))
        if res.feasible:
            warm = join_vars(res.X, res.Y)
        return res

    res_hi = probe(1.0)
    if not res_hi.feasible:
        diagnostic = None
        for lam in (1.25, 1.5, 2.0):
            if probe(lam).feasible:
                diagnostic = lam
                break
        raise NotStabilizable(
            "synthesis inequality infeasible at every rate below 1",
            diagnostic_lambda=diagnostic,
        )
    lo, hi, best = 0.0, 1.0, res_hi
    while hi - lo > lambda_tol:
        mid = (hi + lo) / 2.0
        res = probe(mid)
        if res.feasible:
            hi, best = mid, res
        else:
            lo = mid
    if hi >= 1.0:
        raise NotStabilizable(
            f"feasible only at rate 1; infeasible at {1.0 - lambda_tol}",
            diagnostic_lambda=1.0,
        )

    X, Y = best.X, best.Y
    F = Y @ np.linalg.inv(X)
    report = verify_gain(data, F)
    if report.lambda_min > hi + 5.0 * lambda_tol:
        raise VerificationMismatch(
            f"closed-loop rate {report.lambda_min:.6f} exceeds achieved "
            f"{hi:.6f} by more than {5.0 * lambda_tol}"
        )
    return SynthesisResult(X, Y, F, hi, backend, tuple(trace), report)
