"""Risk functionals for finite distributions.

Value-at-Risk, Conditional Value-at-Risk (dual and tail forms), and the
expected-excess building block they share. Everything operates on ``Pmf``,
a finite probability mass function with sorted, merged atoms, so quantiles
are plain CDF scans and the dual minimizer always sits on an atom.

All functions are pure and thread-safe.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Pmf", "var", "expected_excess", "cvar_dual", "cvar_tail"]

# Atom probabilities must sum to one within this tolerance.
PROB_TOL = 1e-12

# Slack used in CDF threshold comparisons so that exact-fraction CDF values
# (0.25, 0.75, ...) are matched robustly after accumulation.
_CDF_SLACK = 1e-9


class Pmf:
    """Finite probability mass function over real values.

    Atoms are sorted ascending by value and duplicate values are merged at
    construction. Probabilities must be nonnegative and sum to one within
    ``PROB_TOL``.

    Parameters
    ----------
    values : array_like
        Atom locations (any real unit: cost, cfs, ...).
    probs : array_like
        Atom probabilities, same length as ``values``.
    """

    __slots__ = ("values", "probs")

    def __init__(self, values, probs):
        values = np.atleast_1d(np.asarray(values, dtype=np.float64))
        probs = np.atleast_1d(np.asarray(probs, dtype=np.float64))
        if values.ndim != 1 or values.shape != probs.shape:
            raise ValueError("values and probs must be 1-d arrays of equal length")
        if values.size == 0:
            raise ValueError("pmf needs at least one atom")
        if not np.all(np.isfinite(values)):
            raise ValueError("atom values must be finite")
        if np.any(probs < 0.0):
            raise ValueError("atom probabilities must be nonnegative")
        total = probs.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"atom probabilities sum to {total!r}, expected 1")
        # Sort and merge duplicates; bincount keeps the accumulation order
        # deterministic.
        uniq, inverse = np.unique(values, return_inverse=True)
        merged = np.bincount(inverse, weights=probs, minlength=uniq.size)
        self.values = uniq
        self.probs = merged

    @classmethod
    def from_atoms(cls, atoms):
        """Build from an iterable of ``(value, prob)`` pairs."""
        pairs = list(atoms)
        return cls([v for v, _ in pairs], [p for _, p in pairs])

    @classmethod
    def from_samples(cls, samples):
        """Empirical pmf of a sample array (equal weight per draw)."""
        samples = np.asarray(samples, dtype=np.float64).ravel()
        if samples.size == 0:
            raise ValueError("need at least one sample")
        uniq, counts = np.unique(samples, return_counts=True)
        return cls(uniq, counts / samples.size)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"Pmf({self.values.tolist()}, {self.probs.tolist()})"

    def mean(self) -> float:
        return float(self.values @ self.probs)

    @property
    def min_value(self) -> float:
        return float(self.values[0])

    @property
    def max_value(self) -> float:
        return float(self.values[-1])

    def shift(self, a: float) -> "Pmf":
        """Pmf of Y + a (translation of every atom)."""
        out = object.__new__(Pmf)
        out.values = self.values + float(a)
        out.probs = self.probs.copy()
        return out

    def atoms(self):
        return list(zip(self.values.tolist(), self.probs.tolist()))


def _check_alpha(alpha, upper_open=False):
    a = float(alpha)
    if not 0.0 < a <= 1.0 or (upper_open and a == 1.0):
        hi = "1)" if upper_open else "1]"
        raise ValueError(f"alpha must be in (0, {hi}, got {alpha!r}")
    return a


def var(dist: Pmf, alpha) -> float:
    """Value-at-Risk at level alpha: the left-side (1 - alpha)-quantile.

    Returns the smallest atom value y with P(Y <= y) >= 1 - alpha. At
    alpha = 1 the threshold is zero, so the smallest atom is returned.
    """
    a = _check_alpha(alpha)
    cdf = np.cumsum(dist.probs)
    target = 1.0 - a
    idx = int(np.searchsorted(cdf, target - _CDF_SLACK, side="left"))
    idx = min(idx, dist.values.size - 1)
    return float(dist.values[idx])


def expected_excess(dist: Pmf, s: float) -> float:
    """E[max(Y - s, 0)]: mean excess of the distribution above s.

    Nonincreasing and convex in s; equals mean - s for s below the smallest
    atom and 0 at or above the largest.
    """
    return float(np.maximum(dist.values - float(s), 0.0) @ dist.probs)


def cvar_dual(dist: Pmf, alpha, s_grid=None):
    """CVaR at level alpha via the dual form min_s s + E[max(Y-s,0)] / alpha.

    The minimization scans ``s_grid``; for a finite pmf the exact minimizer
    lies on an atom, so the default grid (the atom values) is exact. Ties
    resolve to the smallest minimizing s.

    Returns
    -------
    (value, s_star) : tuple of floats
    """
    a = _check_alpha(alpha)
    if s_grid is None:
        s_grid = dist.values
    s_grid = np.sort(np.asarray(s_grid, dtype=np.float64).ravel())
    if s_grid.size == 0:
        raise ValueError("s_grid must be nonempty")
    excess = np.maximum(dist.values[None, :] - s_grid[:, None], 0.0) @ dist.probs
    objective = s_grid + excess / a
    best = int(np.argmin(objective))  # first occurrence = smallest s
    return float(objective[best]), float(s_grid[best])


def cvar_tail(dist: Pmf, alpha) -> float:
    """CVaR at level alpha in (0, 1) via VaR + E[max(Y - VaR, 0)] / alpha.

    Agrees with ``cvar_dual`` on any finite pmf. Not defined at alpha = 1;
    use ``cvar_dual`` (or the mean) there.
    """
    a = _check_alpha(alpha, upper_open=True)
    v = var(dist, a)
    return v + expected_excess(dist, v) / a
