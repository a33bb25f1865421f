"""Multi-view sparse coding by alternating accelerated proximal gradient.

All views share one code matrix. With per-view data X_p (view_dim_p x
n_samples, samples in columns), per-view dictionaries D_p (view_dim_p x
n_atoms) and shared codes W (n_atoms x n_samples), the objective is

    (1/N) sum_p ||X_p - D_p W||_F^2
        + lam   * sum_p sum_atoms max-abs coefficient of the atom in view p
        + gamma * sum_code-rows max-abs entry of the row

subject to every per-view atom column having Euclidean norm at most 1.

The code solve works on the vertically stacked views, which is
algebraically identical because W is shared. The dictionary solve keeps
per-view blocks, because both the atom penalty and the norm constraint
act per view. Both inner solves are accelerated proximal gradient with
momentum-averaged iterates; their fit-term gradients and Lipschitz
constants are kept in a halved convention (gradient of half the fit
term, paired with half its curvature), so the prox weights carry a
matching factor and the minimizer is unchanged. Each solve returns the
best-objective iterate it saw, the warm start included, which makes the
outer alternation monotone by construction.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    DegenerateInputError,
    DimensionError,
    NumericError,
    ParameterError,
)
from .prox import _prox_rows, norm_l1inf
from .validation import check_matrix, check_scalar, check_views

__all__ = [
    "ATOM_NORM_SLACK",
    "SolverConfig",
    "DictionarySet",
    "ObjectiveBreakdown",
    "InnerTrace",
    "SolverTrace",
    "objective",
    "spectral_norm_sq",
    "code_gradient",
    "dict_gradient",
    "solve_codes",
    "solve_dictionary",
    "fit",
    "encode",
    "MultiViewSparseCoder",
]

# Feasibility slack on squared atom norms; rescaled atoms land well inside it.
ATOM_NORM_SLACK = 1e-10


@dataclass
class SolverConfig:
    """Knobs of the alternating solver.

    ``lam`` weights the per-view atom penalty and ``gamma`` the code-row
    penalty during ``fit``; the single-block solvers take their weight
    explicitly and read only the iteration and tolerance fields here.
    Tolerances are relative objective-change thresholds.
    """

    n_atoms: int = 32
    lam: float = 0.01
    gamma: float = 0.01
    outer_tol: float = 1e-4
    outer_max_iters: int = 100
    inner_tol: float = 1e-6
    inner_max_iters: int = 200
    power_iter_tol: float = 1e-12
    power_iter_max: int = 5000
    rng_seed: int = 0

    def validate(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ParameterError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        check_scalar(self.lam, "lam", minimum=0.0)
        check_scalar(self.gamma, "gamma", minimum=0.0)
        check_scalar(self.outer_tol, "outer_tol", minimum=0.0)
        check_scalar(self.inner_tol, "inner_tol", minimum=0.0)
        check_scalar(self.power_iter_tol, "power_iter_tol", minimum=0.0, strict=True)
        for name in ("outer_max_iters", "inner_max_iters", "power_iter_max"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        return self

    def to_dict(self):
        return {
            "n_atoms": int(self.n_atoms),
            "lam": float(self.lam),
            "gamma": float(self.gamma),
            "outer_tol": float(self.outer_tol),
            "outer_max_iters": int(self.outer_max_iters),
            "inner_tol": float(self.inner_tol),
            "inner_max_iters": int(self.inner_max_iters),
            "power_iter_tol": float(self.power_iter_tol),
            "power_iter_max": int(self.power_iter_max),
            "rng_seed": int(self.rng_seed),
        }


class DictionarySet:
    """Per-view dictionaries sharing one atom count.

    Construction enforces the atom-norm constraint: every per-view atom
    column satisfies ||d||^2 <= 1 + ATOM_NORM_SLACK.
    """

    def __init__(self, dictionaries):
        if isinstance(dictionaries, np.ndarray):
            dictionaries = [dictionaries]
        dicts = [check_matrix(d, f"dictionary[{p}]") for p, d in enumerate(dictionaries)]
        if not dicts:
            raise ParameterError("DictionarySet needs at least one view")
        n_atoms = dicts[0].shape[1]
        for p, d in enumerate(dicts):
            if d.shape[1] != n_atoms:
                raise DimensionError(
                    f"view {p}: expected {n_atoms} atoms, got {d.shape[1]}"
                )
            col_sq = (d * d).sum(axis=0)
            worst = int(np.argmax(col_sq))
            if col_sq[worst] > 1.0 + ATOM_NORM_SLACK:
                raise ParameterError(
                    f"view {p}: atom {worst} has squared norm {col_sq[worst]:.6g},"
                    f" exceeding the unit bound"
                )
        self.dictionaries = dicts

    @property
    def n_views(self):
        return len(self.dictionaries)

    @property
    def n_atoms(self):
        return self.dictionaries[0].shape[1]

    @property
    def view_dims(self):
        return [d.shape[0] for d in self.dictionaries]

    def stacked(self):
        return np.vstack(self.dictionaries)

    @classmethod
    def from_stacked(cls, stacked, view_dims):
        if stacked.shape[0] != sum(view_dims):
            raise DimensionError(
                f"stacked dictionary has {stacked.shape[0]} rows, view dims sum to"
                f" {sum(view_dims)}"
            )
        parts, row = [], 0
        for dim in view_dims:
            parts.append(stacked[row : row + dim].copy())
            row += dim
        return cls(parts)

    def copy(self):
        return DictionarySet([d.copy() for d in self.dictionaries])

    def __iter__(self):
        return iter(self.dictionaries)

    def __getitem__(self, p):
        return self.dictionaries[p]

    def __len__(self):
        return len(self.dictionaries)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Objective value split into its three terms."""

    total: float
    fit_term: float
    dict_penalty: float
    code_penalty: float


@dataclass
class InnerTrace:
    """Record of one accelerated proximal gradient run.

    ``objectives`` holds the objective at the start point followed by
    the averaged iterate's objective after each iteration; ``taus`` the
    momentum value used at each iteration (so taus[0] == 1).
    """

    objectives: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    lipschitz: float = 0.0
    n_iters: int = 0
    converged: bool = False


@dataclass
class SolverTrace:
    """Record of the outer alternation.

    ``breakdowns[0]`` is the objective at initialization; entry t+1
    follows outer iteration t.
    """

    breakdowns: list = field(default_factory=list)
    code_traces: list = field(default_factory=list)
    dict_traces: list = field(default_factory=list)
    termination: str = ""

    @property
    def objectives(self):
        return [b.total for b in self.breakdowns]


def _as_dict_list(dictionaries):
    if isinstance(dictionaries, DictionarySet):
        return dictionaries.dictionaries
    if isinstance(dictionaries, np.ndarray):
        return [check_matrix(dictionaries, "dictionary[0]")]
    return [check_matrix(d, f"dictionary[{p}]") for p, d in enumerate(dictionaries)]


def _check_system(views, dicts, codes=None):
    """Cross-check view/dictionary/code shapes, naming the offending view."""
    if len(dicts) != len(views):
        raise DimensionError(
            f"expected {len(views)} dictionaries for {len(views)} views, got {len(dicts)}"
        )
    n_atoms = dicts[0].shape[1]
    for p, (x, d) in enumerate(zip(views, dicts)):
        if d.shape[0] != x.shape[0]:
            raise DimensionError(
                f"view {p}: data has {x.shape[0]} features but dictionary has"
                f" {d.shape[0]} rows"
            )
        if d.shape[1] != n_atoms:
            raise DimensionError(
                f"view {p}: expected {n_atoms} atoms, got {d.shape[1]}"
            )
    if codes is not None:
        if codes.shape[0] != n_atoms:
            raise DimensionError(
                f"codes have {codes.shape[0]} rows but dictionaries have {n_atoms} atoms"
            )
        if codes.shape[1] != views[0].shape[1]:
            raise DimensionError(
                f"codes have {codes.shape[1]} columns but views have"
                f" {views[0].shape[1]} samples"
            )
    return n_atoms


def objective(views, dictionaries, codes, lam, gamma):
    """Evaluate the full objective and its terms at (dictionaries, codes).

    Purely an evaluation: no feasibility requirement on the atoms, so it
    can score arbitrary candidates.
    """
    views = check_views(views)
    dicts = _as_dict_list(dictionaries)
    codes = check_matrix(codes, "codes", allow_empty=True)
    lam = check_scalar(lam, "lam", minimum=0.0)
    gamma = check_scalar(gamma, "gamma", minimum=0.0)
    _check_system(views, dicts, codes)
    n = views[0].shape[1]
    fit_term = sum(
        float(np.linalg.norm(x - d @ codes) ** 2) for x, d in zip(views, dicts)
    ) / n
    dict_penalty = lam * sum(norm_l1inf(d.T) for d in dicts)
    code_penalty = gamma * norm_l1inf(codes)
    return ObjectiveBreakdown(
        fit_term + dict_penalty + code_penalty, fit_term, dict_penalty, code_penalty
    )


def spectral_norm_sq(m, tol=1e-12, max_iters=5000, seed=0):
    """Largest eigenvalue of M^T M (the squared spectral norm of M).

    Seeded power iteration on the smaller Gram side; stops when the
    Rayleigh quotient is stable to ``tol`` (relative). When the top
    eigenvalues are clustered the successive-difference test cannot
    tighten past the cluster width within any fixed budget even though
    the estimate is already accurate, so on budget exhaustion the
    eigenpair residual is checked: a residual within sqrt(tol) of the
    estimate certifies it and it is returned. Otherwise NumericError is
    raised carrying the last estimate.
    """
    m = check_matrix(m, "spectral_norm_sq input", allow_empty=True)
    tol = check_scalar(tol, "tol", minimum=0.0, strict=True)
    if m.size == 0 or not m.any():
        return 0.0
    work = m if m.shape[0] >= m.shape[1] else m.T
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(work.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    residual = math.inf
    for _ in range(int(max_iters)):
        w = work.T @ (work @ v)
        current = float(v @ w)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            # v fell in the null space; a fresh random direction escapes it.
            v = rng.standard_normal(work.shape[1])
            v /= np.linalg.norm(v)
            continue
        residual = float(np.linalg.norm(w - current * v))
        v = w / nrm
        if abs(current - estimate) <= tol * max(current, np.finfo(float).tiny):
            return current
        estimate = current
    if residual <= math.sqrt(tol) * max(estimate, np.finfo(float).tiny):
        return estimate
    raise NumericError(
        f"power iteration did not stabilize to {tol:g} within {max_iters} iterations",
        last_estimate=estimate,
    )


def _curvature_bound(m, config):
    """Squared spectral norm for step sizing, tolerant of slow stabilization.

    A spectrum whose top eigenvalues sit ~1e-4 apart defeats both of the
    power iteration's stopping tests at the default budget while the
    estimate is already within a fraction of a percent, so here a
    stabilization failure downgrades to a warning and the last estimate
    is inflated slightly. Overshooting the curvature only shortens
    steps; best-iterate selection absorbs any residual underestimate.
    """
    try:
        return spectral_norm_sq(
            m,
            tol=config.power_iter_tol,
            max_iters=config.power_iter_max,
            seed=config.rng_seed,
        )
    except NumericError as exc:
        warnings.warn(
            f"{exc}; continuing with the inflated last estimate", RuntimeWarning
        )
        return 1.01 * exc.last_estimate


def code_gradient(views, dictionaries, codes):
    """(1/N)(D^T D W - D^T X) on the stacked system.

    This is the gradient of HALF the fit term; the solver pairs it with
    the matching half-curvature constant, leaving the updates exact.
    """
    views = check_views(views)
    dicts = _as_dict_list(dictionaries)
    codes = check_matrix(codes, "codes")
    _check_system(views, dicts, codes)
    d = np.vstack(dicts)
    x = np.vstack(views)
    n = x.shape[1]
    return (d.T @ (d @ codes) - d.T @ x) / n


def dict_gradient(views, codes, dictionaries):
    """(1/N)(D W W^T - X W^T) on the stacked system (half-fit gradient in D)."""
    views = check_views(views)
    dicts = _as_dict_list(dictionaries)
    codes = check_matrix(codes, "codes")
    _check_system(views, dicts, codes)
    d = np.vstack(dicts)
    x = np.vstack(views)
    n = x.shape[1]
    return (d @ (codes @ codes.T) - x @ codes.T) / n


def _next_tau(tau):
    # Recurrence 1/tau'^2 - 1/tau' = 1/tau^2, solved for tau' in (0, 1).
    return 2.0 * tau / (tau + math.sqrt(tau * tau + 4.0))


def solve_codes(views, dictionaries, gamma, config, initial_codes=None):
    """Fit the shared code matrix with the dictionaries held fixed.

    Accelerated proximal gradient on the stacked system. Each iteration
    takes a gradient step from the main iterate at the extrapolated
    point, applies the row-max prox, and folds the result into a
    momentum-weighted average. Returns ``(codes, InnerTrace)`` where
    codes is the best-objective iterate seen (the start point included,
    so a warm start can never be degraded).
    """
    views = check_views(views)
    dicts = _as_dict_list(dictionaries)
    gamma = check_scalar(gamma, "gamma", minimum=0.0)
    config.validate()
    n_atoms = _check_system(views, dicts)
    x = np.vstack(views)
    d = np.vstack(dicts)
    if not d.any():
        raise DegenerateInputError("dictionary is identically zero; cannot solve codes")
    n = x.shape[1]
    gram = d.T @ d
    corr = d.T @ x
    x_sq = float(np.vdot(x, x))
    lip = _curvature_bound(d, config) / n

    def eval_obj(w_mat):
        fit_val = (x_sq - 2.0 * float(np.vdot(corr, w_mat)) + float(np.vdot(gram @ w_mat, w_mat))) / n
        return max(fit_val, 0.0) + gamma * norm_l1inf(w_mat)

    if initial_codes is None:
        w = np.zeros((n_atoms, n))
    else:
        w = check_matrix(initial_codes, "initial_codes", allow_empty=True).copy()
        if w.shape != (n_atoms, n):
            raise DimensionError(
                f"initial codes have shape {w.shape}, expected {(n_atoms, n)}"
            )
    avg = w.copy()
    best = w.copy()
    best_obj = eval_obj(w)
    prev_obj = best_obj
    objectives = [best_obj]
    taus = []
    tau = 1.0
    converged = False
    for _ in range(int(config.inner_max_iters)):
        taus.append(tau)
        z = tau * w + (1.0 - tau) * avg
        step = (gram @ z - corr) / n
        u = w - step / (tau * lip)
        w = _prox_rows(u, gamma / (2.0 * tau * lip))
        avg = tau * w + (1.0 - tau) * avg
        obj_avg = eval_obj(avg)
        obj_w = eval_obj(w)
        if obj_avg < best_obj:
            best_obj = obj_avg
            best = avg.copy()
        if obj_w < best_obj:
            best_obj = obj_w
            best = w.copy()
        objectives.append(obj_avg)
        if abs(obj_avg - prev_obj) <= config.inner_tol * (1.0 + abs(prev_obj)):
            converged = True
            break
        prev_obj = obj_avg
        tau = _next_tau(tau)
    trace = InnerTrace(
        objectives=objectives,
        taus=taus,
        lipschitz=lip,
        n_iters=len(taus),
        converged=converged,
    )
    return best, trace


def _rescale_over_norm_atoms(stacked, slices):
    """Shrink per-view atom columns with norm > 1 back onto the unit sphere."""
    out = stacked.copy()
    for sl in slices:
        block = out[sl]
        norms = np.sqrt((block * block).sum(axis=0))
        block /= np.maximum(norms, 1.0)
    return out


def solve_dictionary(views, codes, lam, config, initial_dictionaries):
    """Fit per-view dictionaries with the codes held fixed.

    Same accelerated scheme as solve_codes, but the prox acts per atom
    within each view (shrinking each atom's largest coefficient) and
    candidates are made feasible by rescaling over-norm atoms before
    scoring. Returns ``(DictionarySet, InnerTrace)`` with the best
    feasible iterate (the warm start included).
    """
    views = check_views(views)
    codes = check_matrix(codes, "codes")
    lam = check_scalar(lam, "lam", minimum=0.0)
    config.validate()
    if not codes.any():
        raise DegenerateInputError("code matrix is identically zero; cannot fit dictionary")
    if isinstance(initial_dictionaries, DictionarySet):
        init = initial_dictionaries
    else:
        init = DictionarySet(initial_dictionaries)
    _check_system(views, init.dictionaries, codes)
    x = np.vstack(views)
    n = x.shape[1]
    view_dims = [v.shape[0] for v in views]
    slices, row = [], 0
    for dim in view_dims:
        slices.append(slice(row, row + dim))
        row += dim
    gram = codes @ codes.T
    corr = x @ codes.T
    x_sq = float(np.vdot(x, x))
    lip = _curvature_bound(codes, config) / n

    def penalty(b_mat):
        return lam * sum(float(np.abs(b_mat[sl]).max(axis=0).sum()) for sl in slices)

    def eval_obj(b_mat):
        fit_val = (x_sq - 2.0 * float(np.vdot(corr, b_mat)) + float(np.vdot(b_mat @ gram, b_mat))) / n
        return max(fit_val, 0.0) + penalty(b_mat)

    b = init.stacked()
    avg = b.copy()
    best = _rescale_over_norm_atoms(b, slices)
    best_obj = eval_obj(best)
    prev_obj = best_obj
    objectives = [best_obj]
    taus = []
    tau = 1.0
    converged = False
    for _ in range(int(config.inner_max_iters)):
        taus.append(tau)
        z = tau * b + (1.0 - tau) * avg
        u = b - (z @ gram - corr) / (n * tau * lip)
        weight = lam / (2.0 * tau * lip)
        for sl in slices:
            u[sl] = _prox_rows(u[sl].T, weight).T
        b = u
        avg = tau * b + (1.0 - tau) * avg
        cand_avg = _rescale_over_norm_atoms(avg, slices)
        cand_b = _rescale_over_norm_atoms(b, slices)
        obj_avg = eval_obj(cand_avg)
        obj_b = eval_obj(cand_b)
        if obj_avg < best_obj:
            best_obj = obj_avg
            best = cand_avg
        if obj_b < best_obj:
            best_obj = obj_b
            best = cand_b
        objectives.append(obj_avg)
        if abs(obj_avg - prev_obj) <= config.inner_tol * (1.0 + abs(prev_obj)):
            converged = True
            break
        prev_obj = obj_avg
        tau = _next_tau(tau)
    trace = InnerTrace(
        objectives=objectives,
        taus=taus,
        lipschitz=lip,
        n_iters=len(taus),
        converged=converged,
    )
    return DictionarySet.from_stacked(best, view_dims), trace


def _initial_dictionaries(views, config):
    """Data-driven start: atoms are stacked samples normalized to unit norm.

    Sampling without replacement; if more atoms than samples are asked
    for, the overflow is random Gaussian. Normalizing the stacked atom
    bounds each per-view block at norm 1, so the start is feasible.
    """
    x = np.vstack(views)
    n = x.shape[1]
    n_atoms = int(config.n_atoms)
    rng = np.random.default_rng(config.rng_seed)
    picked = rng.choice(n, size=min(n_atoms, n), replace=False)
    atoms = x[:, picked].copy()
    if n_atoms > n:
        extra = rng.standard_normal((x.shape[0], n_atoms - n))
        atoms = np.hstack([atoms, extra])
    norms = np.sqrt((atoms * atoms).sum(axis=0))
    dead = norms == 0.0
    if dead.any():
        atoms[:, dead] = rng.standard_normal((x.shape[0], int(dead.sum())))
        norms = np.sqrt((atoms * atoms).sum(axis=0))
    atoms /= norms
    view_dims = [v.shape[0] for v in views]
    return DictionarySet.from_stacked(atoms, view_dims)


def fit(views, config):
    """Learn per-view dictionaries and shared codes by alternation.

    Runs code solves and dictionary solves in turn, warm-starting each
    from the previous outer iterate, until the relative change of the
    full objective drops below ``config.outer_tol`` or the iteration
    budget runs out. Returns ``(DictionarySet, codes, SolverTrace)``.
    """
    views = check_views(views)
    config.validate()
    n = views[0].shape[1]
    if config.n_atoms > n:
        warnings.warn(
            f"n_atoms={config.n_atoms} exceeds the {n} training samples;"
            f" surplus atoms start as random noise",
            stacklevel=2,
        )
    dicts = _initial_dictionaries(views, config)
    codes = np.zeros((int(config.n_atoms), n))
    trace = SolverTrace(termination="max_iterations")
    breakdown = objective(views, dicts, codes, config.lam, config.gamma)
    trace.breakdowns.append(breakdown)
    for _ in range(int(config.outer_max_iters)):
        previous_total = breakdown.total
        codes, code_trace = solve_codes(
            views, dicts, config.gamma, config, initial_codes=codes
        )
        trace.code_traces.append(code_trace)
        if codes.any():
            dicts, dict_trace = solve_dictionary(
                views, codes, config.lam, config, initial_dictionaries=dicts
            )
            trace.dict_traces.append(dict_trace)
        # all-zero codes (gamma too strong) leave the fit term blind to the
        # dictionary, so the dictionary step is skipped for this sweep
        breakdown = objective(views, dicts, codes, config.lam, config.gamma)
        trace.breakdowns.append(breakdown)
        if abs(breakdown.total - previous_total) <= config.outer_tol * (
            1.0 + abs(previous_total)
        ):
            trace.termination = "converged"
            break
    return dicts, codes, trace


def encode(views, dictionaries, gamma, config):
    """Codes for new samples against a fixed dictionary set (cold start)."""
    views = check_views(views)
    if not isinstance(dictionaries, DictionarySet):
        dictionaries = DictionarySet(dictionaries)
    _check_system(views, dictionaries.dictionaries)
    codes, _ = solve_codes(views, dictionaries, gamma, config)
    return codes


def _views_from_rows(X):
    """Sample-major input (one array or a list of per-view arrays) to column views."""
    if isinstance(X, np.ndarray):
        X = [X]
    return [check_matrix(x, f"X[{p}]").T for p, x in enumerate(X)]


class MultiViewSparseCoder(BaseEstimator, TransformerMixin):
    """Estimator facade over ``fit``/``encode``.

    ``X`` is a list of per-view arrays of shape (n_samples, view_dim)
    (a single array counts as one view); all views must agree on
    n_samples. ``transform`` returns the (n_samples, n_atoms) code
    matrix for new samples against the learned dictionaries.
    """

    def __init__(
        self,
        n_atoms=32,
        lam=0.01,
        gamma=0.01,
        outer_tol=1e-4,
        outer_max_iters=100,
        inner_tol=1e-6,
        inner_max_iters=200,
        random_state=0,
    ):
        self.n_atoms = n_atoms
        self.lam = lam
        self.gamma = gamma
        self.outer_tol = outer_tol
        self.outer_max_iters = outer_max_iters
        self.inner_tol = inner_tol
        self.inner_max_iters = inner_max_iters
        self.random_state = random_state

    def _config(self):
        return SolverConfig(
            n_atoms=self.n_atoms,
            lam=self.lam,
            gamma=self.gamma,
            outer_tol=self.outer_tol,
            outer_max_iters=self.outer_max_iters,
            inner_tol=self.inner_tol,
            inner_max_iters=self.inner_max_iters,
            rng_seed=self.random_state,
        )

    def fit(self, X, y=None):
        views = _views_from_rows(X)
        self.dictionaries_, codes, self.trace_ = fit(views, self._config())
        self.codes_ = codes.T
        self.view_dims_ = [v.shape[0] for v in views]
        return self

    def transform(self, X):
        check_is_fitted(self, "dictionaries_")
        views = _views_from_rows(X)
        return encode(views, self.dictionaries_, self.gamma, self._config()).T

    def fit_transform(self, X, y=None):
        self.fit(X)
        return self.codes_.copy()
