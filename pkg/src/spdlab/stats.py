"""Monte-Carlo estimators and circular statistics.

The accumulators are single-pass and mergeable, so per-worker partial
results can be combined without storing samples.
"""
import numpy as np

UNDIRECTED_TOL = 1e-12


def mc_mean(values, axis=0):
    x = np.asarray(values, dtype=float)
    if x.shape[axis] < 1:
        raise ValueError("mean of an empty sample")
    return x.mean(axis=axis)


def mc_std(values, axis=0):
    """Corrected sample standard deviation (divisor ``N - 1``)."""
    x = np.asarray(values, dtype=float)
    if x.shape[axis] < 2:
        raise ValueError("standard deviation needs at least two samples")
    return x.std(axis=axis, ddof=1)


def standard_error(values, axis=0):
    x = np.asarray(values, dtype=float)
    return mc_std(x, axis) / np.sqrt(x.shape[axis])


def circular_mean(vectors, tol=UNDIRECTED_TOL):
    """Mean direction and resultant length of unit vectors ``(N, d)``.

    Returns ``(direction, L)``; ``direction`` is None when ``L < tol``
    (the directions cancel and no mean exists). ``L`` is obtained from
    ``1 - L^2 = mean |u_i - u_bar|^2``, which stays accurate when all
    vectors nearly coincide.
    """
    v = np.asarray(vectors, dtype=float)
    if v.ndim != 2 or len(v) == 0:
        raise ValueError("expected a nonempty (N, d) array of unit vectors")
    if np.any(np.abs(np.linalg.norm(v, axis=1) - 1.0) > 1e-10):
        raise ValueError("direction samples must be unit vectors")
    ubar = v.mean(axis=0)
    spread = float(np.mean(np.sum((v - ubar) ** 2, axis=1)))
    L = float(np.sqrt(max(0.0, 1.0 - spread)))
    if L < tol:
        return None, L
    return ubar / np.linalg.norm(ubar), L


def circular_std(L):
    """``sqrt(-2 log L)``; infinite for ``L <= 0`` (undirected)."""
    L = np.asarray(L, dtype=float)
    if np.any(L > 1.0 + 1e-12):
        raise ValueError("resultant length cannot exceed 1")
    with np.errstate(divide="ignore"):
        out = np.sqrt(np.maximum(0.0, -2.0 * np.log(np.minimum(L, 1.0))))
    return out if out.ndim else float(out)


def circular_std_from_spread(spread):
    """``sqrt(-2 log L)`` written in terms of ``spread = 1 - L^2``."""
    spread = np.clip(np.asarray(spread, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        out = np.sqrt(-np.log1p(-spread))
    return out if out.ndim else float(out)


class MomentAccumulator:
    """Running count, mean and centred sum of squares for arrays of fixed shape.

    Batches are folded in with the pairwise (Chan et al.) update, which is the
    same rule used by :meth:`merge`.
    """

    def __init__(self, shape=()):
        self.shape = tuple(shape)
        self.n = 0
        self.mean = np.zeros(self.shape)
        self.m2 = np.zeros(self.shape)

    def _combine(self, n_b, mean_b, m2_b):
        if n_b == 0:
            return
        n_a = self.n
        n = n_a + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.m2 = self.m2 + m2_b + delta * delta * (n_a * n_b / n)
        self.n = n

    def update(self, batch):
        """Add samples stacked along axis 0."""
        x = np.asarray(batch, dtype=float)
        if x.shape[1:] != self.shape:
            raise ValueError(f"batch shape {x.shape[1:]} != accumulator shape {self.shape}")
        if len(x) == 0:
            return self
        mean_b = x.mean(axis=0)
        m2_b = ((x - mean_b) ** 2).sum(axis=0)
        self._combine(len(x), mean_b, m2_b)
        return self

    def add(self, sample):
        return self.update(np.asarray(sample, dtype=float)[None])

    def merge(self, other):
        if other.shape != self.shape:
            raise ValueError("cannot merge accumulators of different shape")
        self._combine(other.n, other.mean, other.m2)
        return self

    def std(self):
        if self.n < 2:
            raise ValueError("standard deviation needs at least two samples")
        return np.sqrt(self.m2 / (self.n - 1))

    def sem(self):
        return self.std() / np.sqrt(self.n)


class DirectionAccumulator:
    """Mergeable resultant statistics of unit vectors at ``shape`` sites.

    Per site it keeps the count, the mean vector and the summed squared
    deviation from it (a vector-valued Welford state), from which
    ``1 - L^2 = m2 / n`` follows without cancellation. Entries flagged invalid
    (zero flux in that realisation) are skipped.
    """

    def __init__(self, shape, d):
        self.shape = tuple(shape)
        self.d = d
        self.n = np.zeros(self.shape, dtype=np.int64)
        self.mean = np.zeros(self.shape + (d,))
        self.m2 = np.zeros(self.shape)

    def _combine(self, n_b, mean_b, m2_b):
        n = self.n + n_b
        with np.errstate(invalid="ignore", divide="ignore"):
            wb = np.where(n > 0, n_b / np.maximum(n, 1), 0.0)
            delta = mean_b - self.mean
            self.mean = self.mean + delta * wb[..., None]
            self.m2 = self.m2 + m2_b + np.sum(delta * delta, axis=-1) * self.n * wb
        self.n = n

    def update(self, batch, valid=None):
        u = np.asarray(batch, dtype=float)
        if u.shape[1:] != self.shape + (self.d,):
            raise ValueError("batch shape does not match the accumulator")
        if valid is None:
            valid = np.ones(u.shape[:-1], dtype=bool)
        u = np.where(valid[..., None], u, 0.0)
        n_b = valid.sum(axis=0)
        mean_b = u.sum(axis=0) / np.maximum(n_b, 1)[..., None]
        dev = np.where(valid[..., None], u - mean_b, 0.0)
        self._combine(n_b, mean_b, np.sum(dev * dev, axis=(0, -1)))
        return self

    def add(self, vectors, valid=None):
        return self.update(np.asarray(vectors)[None],
                           None if valid is None else np.asarray(valid)[None])

    def merge(self, other):
        if other.shape != self.shape or other.d != self.d:
            raise ValueError("cannot merge accumulators of different shape")
        self._combine(other.n, other.mean, other.m2)
        return self

    def result(self, tol=UNDIRECTED_TOL):
        """``(direction, L, circular_std, undirected)``.

        Undirected sites (``L < tol``, or no valid vector at all) get NaN
        direction and NaN circular std.
        """
        spread = np.where(self.n > 0, self.m2 / np.maximum(self.n, 1), 1.0)
        spread = np.clip(spread, 0.0, 1.0)
        L = np.sqrt(1.0 - spread)
        undirected = L < tol
        norm = np.linalg.norm(self.mean, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            direction = np.where(undirected[..., None], np.nan, self.mean / norm[..., None])
        std = np.where(undirected, np.nan, circular_std_from_spread(spread))
        return direction, L, std, undirected
