"""Independent reference implementations used to check the library.

Everything here deliberately avoids the library's own algorithms:
projections go through bisection instead of sorting, objectives are
evaluated with loops instead of Gram identities, and minimizers come
from long subgradient runs. Slow on purpose.
"""

import numpy as np


def norm_l1inf_loops(m):
    """Sum of per-row max-abs, written with plain loops."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    total = 0.0
    for row in m:
        best = 0.0
        for value in row:
            if abs(value) > best:
                best = abs(value)
        total += best
    return total


def project_l1_ball_bisection(v, radius, iters=200):
    """l1-ball projection via bisection on the soft-threshold level.

    The optimal projection is sign(v) * max(|v| - theta, 0) with theta
    chosen so the result's l1 norm equals the radius (theta = 0 when v
    is already inside). phi(theta) = sum max(|v|-theta, 0) decreases
    continuously from ||v||_1 to 0 on [0, max|v|], so bisection pins
    theta to far below float spacing in 200 halvings.
    """
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    if radius == 0.0:
        return np.zeros_like(v)
    mags = np.abs(v)
    lo, hi = 0.0, float(mags.max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(mags - mid, 0.0).sum() > radius:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return np.sign(v) * np.maximum(mags - theta, 0.0)


def sample_l1_ball(rng, dim, radius, count):
    """Uniform-ish feasible points: random direction on the simplex,
    random signs, radius scaled by a uniform draw (interior included)."""
    g = rng.standard_normal((count, dim))
    signs = np.sign(g + (g == 0))
    w = rng.exponential(size=(count, dim))
    w /= w.sum(axis=1, keepdims=True)
    scale = radius * rng.uniform(0.0, 1.0, size=(count, 1))
    return signs * w * scale


def _weight_column(t, batch):
    """Scalar or per-element prox weights as a (batch,) float array."""
    arr = np.asarray(t, dtype=float)
    if arr.ndim == 0:
        return np.full(batch, float(arr))
    return arr.reshape(batch)


def prox_objective_batch(z, v, t):
    """0.5||z-v||^2 + t * sum-of-row-max, per batch element.

    ``t`` may be one weight for the whole stack or one per element.
    """
    diff = z - v
    quad = 0.5 * (diff * diff).sum(axis=(1, 2))
    pen = _weight_column(t, z.shape[0]) * np.abs(z).max(axis=2).sum(axis=1)
    return quad + pen


def prox_l1inf_subgradient(v, t, steps=100_000, tie_eps=1e-12):
    """Minimize the prox objective by projected subgradient descent.

    Batched over a (B, R, C) stack. The subgradient of a row maximum
    spreads uniformly over the tie set of max-achieving entries; the
    objective is 1-strongly convex so the 2/(k+1) schedule applies.
    Returns the best iterate per batch element and its objective.
    """
    v = np.asarray(v, dtype=float)
    weights = _weight_column(t, v.shape[0])[:, None, None]
    z = v.copy()
    best_f = prox_objective_batch(z, v, t)
    best_z = z.copy()
    for k in range(1, steps + 1):
        mags = np.abs(z)
        row_max = mags.max(axis=2, keepdims=True)
        ties = (mags >= row_max - tie_eps) & (row_max > 0)
        counts = ties.sum(axis=2, keepdims=True)
        pen_grad = weights * np.where(ties, np.sign(z) / np.maximum(counts, 1), 0.0)
        z = z - (2.0 / (k + 1)) * ((z - v) + pen_grad)
        f = prox_objective_batch(z, v, t)
        improved = f < best_f
        if improved.any():
            best_f = np.where(improved, f, best_f)
            best_z[improved] = z[improved]
    return best_z, best_f


def codes_objective_batch(w, x, d, gamma):
    """(1/N)||X - D W||_F^2 + gamma * sum-of-row-max, per batch element."""
    r = x - d @ w
    n = x.shape[2]
    fit = (r * r).sum(axis=(1, 2)) / n
    pen = gamma * np.abs(w).max(axis=2).sum(axis=1)
    return fit + pen


def codes_subgradient(x, d, gamma, steps=100_000, tie_eps=1e-12):
    """Minimize the shared-code objective by subgradient descent.

    Batched over stacked instances: x is (B, dim, N), d is (B, dim, K).
    Strong convexity is 2 lambda_min(D^T D) / N per instance, which sets
    the 2/(mu (k+1)) schedule. Returns best iterates and objectives.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    n = x.shape[2]
    gram = np.swapaxes(d, 1, 2) @ d
    corr = np.swapaxes(d, 1, 2) @ x
    mu = 2.0 * np.linalg.eigvalsh(gram).min(axis=1) / n
    if (mu <= 0).any():
        raise ValueError("codes_subgradient needs full-column-rank dictionaries")
    w = np.zeros((x.shape[0], d.shape[2], n))
    best_f = codes_objective_batch(w, x, d, gamma)
    best_w = w.copy()
    for k in range(1, steps + 1):
        fit_grad = 2.0 * (gram @ w - corr) / n
        mags = np.abs(w)
        row_max = mags.max(axis=2, keepdims=True)
        ties = (mags >= row_max - tie_eps) & (row_max > 0)
        counts = ties.sum(axis=2, keepdims=True)
        pen_grad = gamma * np.where(ties, np.sign(w) / np.maximum(counts, 1), 0.0)
        w = w - (2.0 / (mu * (k + 1)))[:, None, None] * (fit_grad + pen_grad)
        f = codes_objective_batch(w, x, d, gamma)
        improved = f < best_f
        if improved.any():
            best_f = np.where(improved, f, best_f)
            best_w[improved] = w[improved]
    return best_w, best_f


def central_difference(f, x, index, h):
    """Central finite difference of scalar f at one flat coordinate."""
    x = np.asarray(x, dtype=float)
    flat_plus = x.copy().ravel()
    flat_minus = x.copy().ravel()
    flat_plus[index] += h
    flat_minus[index] -= h
    return (f(flat_plus.reshape(x.shape)) - f(flat_minus.reshape(x.shape))) / (2.0 * h)


def objective_loops(views, dictionaries, codes, lam, gamma):
    """Full objective with explicit loops: fit term, atom penalty, code penalty."""
    n = views[0].shape[1]
    fit = 0.0
    for x, d in zip(views, dictionaries):
        r = x - d @ codes
        for row in r:
            for value in row:
                fit += value * value
    fit /= n
    dict_pen = sum(norm_l1inf_loops(np.asarray(d).T) for d in dictionaries)
    code_pen = norm_l1inf_loops(codes)
    return fit + lam * dict_pen + gamma * code_pen
