"""Time grids, seeded scenario ensembles and adapted-process arithmetic.

Conventions used throughout the package:

* per-path arrays have shape ``(N,)`` for scalar quantities or ``(N, n)``;
* adapted processes store values of shape ``(N, J + 1, n)``, knot-major
  inside each path;
* every time integral uses the left endpoint, so integrands are
  non-anticipating by construction;
* reductions over paths go through the pairwise tree in ``kernels``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import AdaptednessError, ConfigurationError, DimensionError

NATURAL = "natural"
ENLARGED = "enlarged-brownian"
INITIAL = "initial-enlargement"

MODEL_TAGS = {NATURAL: 0, ENLARGED: 1, INITIAL: 2}
XI_DISTRIBUTIONS = {"normal": 2, "bernoulli": 1, "uniform": 2}

# noise channel ids used to key the random streams
CHANNEL_W, CHANNEL_WP, CHANNEL_XI = 0, 1, 2
CHUNK = 4096


# ---------------------------------------------------------------- grids


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ordered knots ``0 = t_0 < t_1 < ... < t_J = T``."""

    knots: np.ndarray

    def __post_init__(self):
        k = np.array(self.knots, dtype=np.float64)
        if k.ndim != 1 or k.size < 2:
            raise ConfigurationError("a time grid needs at least two knots")
        if k[0] != 0.0:
            raise ConfigurationError("the first knot must be 0")
        if not np.all(np.isfinite(k)) or np.any(np.diff(k) <= 0):
            raise ConfigurationError("knots must be finite and strictly increasing")
        k.flags.writeable = False
        object.__setattr__(self, "knots", k)
        dt = np.diff(k)
        dt.flags.writeable = False
        object.__setattr__(self, "dt", dt)

    @property
    def T(self):
        return float(self.knots[-1])

    @property
    def J(self):
        return self.knots.size - 1

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash(self.knots.tobytes())

    def __repr__(self):
        return f"TimeGrid(T={self.T:g}, J={self.J})"


def build_uniform_grid(T, J):
    """Uniform grid with ``J`` steps on ``[0, T]``."""
    if not (isinstance(J, (int, np.integer)) and J >= 1):
        raise ConfigurationError(f"number of steps must be a positive integer, got {J!r}")
    if not (np.isfinite(T) and T > 0):
        raise ConfigurationError(f"horizon must be positive, got {T!r}")
    knots = np.arange(J + 1, dtype=np.float64) * (float(T) / J)
    knots[-1] = float(T)
    return TimeGrid(knots)


# ----------------------------------------------------------- filtrations


@dataclass(frozen=True)
class FiltrationModel:
    """Which information generates the filtration.

    ``natural``
        generated by ``w`` alone.
    ``enlarged-brownian``
        generated by ``w`` and an independent Brownian motion ``w'``.
    ``initial-enlargement``
        generated by ``w`` and a random variable ``xi`` revealed at time 0,
        independent of ``w``.  ``xi_dist`` is one of ``normal`` (mean, std),
        ``bernoulli`` (p,) or ``uniform`` (low, high).
    """

    kind: str = NATURAL
    xi_dist: str = "normal"
    xi_params: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in MODEL_TAGS:
            raise ConfigurationError(f"unknown filtration model {self.kind!r}")
        if self.xi_dist not in XI_DISTRIBUTIONS:
            raise ConfigurationError(f"unknown distribution for xi: {self.xi_dist!r}")
        params = tuple(float(p) for p in self.xi_params)
        if len(params) != XI_DISTRIBUTIONS[self.xi_dist]:
            raise ConfigurationError(
                f"{self.xi_dist} needs {XI_DISTRIBUTIONS[self.xi_dist]} parameters")
        object.__setattr__(self, "xi_params", params)

    @classmethod
    def natural(cls):
        return cls(NATURAL)

    @classmethod
    def enlarged(cls):
        return cls(ENLARGED)

    @classmethod
    def initial(cls, dist="normal", *params):
        if not params:
            params = {"normal": (0.0, 1.0), "bernoulli": (0.5,), "uniform": (-1.0, 1.0)}[dist]
        return cls(INITIAL, dist, params)

    @property
    def tag(self):
        return MODEL_TAGS[self.kind]

    @property
    def has_auxiliary(self):
        return self.kind == ENLARGED

    @property
    def has_xi(self):
        return self.kind == INITIAL

    def coordinate_names(self):
        names = ["w"]
        if self.has_auxiliary:
            names.append("w'")
        if self.has_xi:
            names.append("xi")
        return names


# ------------------------------------------------------------- ensembles


def _freeze(a):
    if a is not None:
        a = np.ascontiguousarray(a, dtype=np.float64)
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Immutable set of ``N`` simulated scenarios on a grid.

    ``dw`` holds the Brownian increments, shape (N, J); ``dwp`` the auxiliary
    increments of ``w'`` (enlarged model only); ``xi`` the initially revealed
    variable (initial-enlargement model only).
    """

    grid: TimeGrid
    model: FiltrationModel
    seed: int
    dw: np.ndarray
    dwp: np.ndarray = None
    xi: np.ndarray = None
    _paths: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "dw", _freeze(self.dw))
        object.__setattr__(self, "dwp", _freeze(self.dwp))
        object.__setattr__(self, "xi", _freeze(self.xi))
        N, J = self.dw.shape
        if J != self.grid.J:
            raise DimensionError("increment array does not match the grid")
        if (self.dwp is not None) != self.model.has_auxiliary:
            raise ConfigurationError("auxiliary increments present iff the model is enlarged-brownian")
        if (self.xi is not None) != self.model.has_xi:
            raise ConfigurationError("initial variable present iff the model is initial-enlargement")
        if self.dwp is not None and self.dwp.shape != (N, J):
            raise DimensionError("auxiliary increments have the wrong shape")
        if self.xi is not None and self.xi.shape != (N,):
            raise DimensionError("initial variable has the wrong shape")

    @property
    def N(self):
        return self.dw.shape[0]

    @property
    def J(self):
        return self.grid.J

    @property
    def w(self):
        """Brownian paths ``w(t_j)``, shape (N, J + 1)."""
        if "w" not in self._paths:
            self._paths["w"] = _freeze(kernels.forward_cumsum(self.dw))
        return self._paths["w"]

    @property
    def wp(self):
        """Auxiliary paths ``w'(t_j)`` or ``None``."""
        if self.dwp is None:
            return None
        if "wp" not in self._paths:
            self._paths["wp"] = _freeze(kernels.forward_cumsum(self.dwp))
        return self._paths["wp"]

    def state(self, j):
        """Information available at knot ``j``."""
        if not 0 <= j <= self.J:
            raise IndexError(f"knot {j} outside 0..{self.J}")
        return InformationState(self, int(j))

    def coordinates(self, j):
        """Stochastic state coordinates at knot ``j``, shape (N, d)."""
        cols = [self.w[:, j]]
        if self.model.has_auxiliary:
            cols.append(self.wp[:, j])
        if self.model.has_xi:
            cols.append(self.xi)
        return np.column_stack(cols)

    def same_scenarios(self, other):
        """True when both ensembles hold identical scenarios (common random numbers)."""
        if self is other:
            return True
        return (
            isinstance(other, PathEnsemble)
            and self.grid == other.grid
            and self.model == other.model
            and self.seed == other.seed
            and np.array_equal(self.dw, other.dw)
            and _opt_equal(self.dwp, other.dwp)
            and _opt_equal(self.xi, other.xi)
        )

    __eq__ = same_scenarios

    def __hash__(self):
        return hash((self.grid, self.model, self.seed, self.N))

    def coarsen(self, factor):
        """Ensemble on every ``factor``-th knot, increments summed (same scenarios)."""
        if self.J % factor:
            raise ConfigurationError(f"J={self.J} not divisible by {factor}")
        grid = TimeGrid(self.grid.knots[::factor])
        w = self.w[:, ::factor]
        dwp = None
        if self.dwp is not None:
            dwp = np.diff(self.wp[:, ::factor], axis=1)
        return PathEnsemble(grid, self.model, self.seed, np.diff(w, axis=1), dwp, self.xi)

    def head(self, N):
        """The first ``N`` scenarios."""
        return PathEnsemble(
            self.grid, self.model, self.seed, self.dw[:N],
            None if self.dwp is None else self.dwp[:N],
            None if self.xi is None else self.xi[:N])

    def __repr__(self):
        return f"PathEnsemble(N={self.N}, {self.grid!r}, model={self.model.kind!r}, seed={self.seed})"


def _opt_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


def _stream(seed, channel, chunk):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(channel, chunk))
    return np.random.Generator(np.random.PCG64(ss))


def _gaussian_channel(seed, channel, N, J, scale):
    out = np.empty((N, J))
    for c, start in enumerate(range(0, N, CHUNK)):
        block = _stream(seed, channel, c).standard_normal((CHUNK, J))
        stop = min(start + CHUNK, N)
        out[start:stop] = block[: stop - start]
    return out * scale[None, :]


def _xi_channel(seed, model, N):
    out = np.empty(N)
    for c, start in enumerate(range(0, N, CHUNK)):
        g = _stream(seed, CHANNEL_XI, c)
        if model.xi_dist == "normal":
            mu, sd = model.xi_params
            block = mu + sd * g.standard_normal(CHUNK)
        elif model.xi_dist == "bernoulli":
            (p,) = model.xi_params
            block = (g.random(CHUNK) < p).astype(np.float64)
        else:
            lo, hi = model.xi_params
            block = lo + (hi - lo) * g.random(CHUNK)
        stop = min(start + CHUNK, N)
        out[start:stop] = block[: stop - start]
    return out


def simulate_ensemble(grid, model, N, seed):
    """Simulate ``N`` scenarios deterministically from ``seed``.

    Each noise channel and each block of 4096 paths draws from its own
    generator keyed by ``(seed, channel, block)``, so scenario ``i`` depends
    only on the seed, the grid and ``i``; a smaller ensemble is a prefix of a
    larger one.
    """
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ConfigurationError(f"path count must be a positive integer, got {N!r}")
    if not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2 ** 64:
        raise ConfigurationError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    seed = int(seed)
    scale = np.sqrt(grid.dt)
    dw = _gaussian_channel(seed, CHANNEL_W, N, grid.J, scale)
    dwp = _gaussian_channel(seed, CHANNEL_WP, N, grid.J, scale) if model.has_auxiliary else None
    xi = _xi_channel(seed, model, N) if model.has_xi else None
    return PathEnsemble(grid, model, seed, dw, dwp, xi)


class InformationState:
    """Read-only view of what is known on every path at knot ``j``.

    History up to ``j`` may be read with :meth:`w_at`; asking for a later
    knot raises :class:`AdaptednessError`.
    """

    __slots__ = ("_ens", "j")

    def __init__(self, ens, j):
        self._ens = ens
        self.j = j

    @property
    def N(self):
        return self._ens.N

    @property
    def t(self):
        return float(self._ens.grid.knots[self.j])

    @property
    def w(self):
        return self._ens.w[:, self.j]

    @property
    def wp(self):
        if not self._ens.model.has_auxiliary:
            raise AdaptednessError(f"w' is not part of the {self._ens.model.kind} filtration")
        return self._ens.wp[:, self.j]

    @property
    def xi(self):
        if not self._ens.model.has_xi:
            raise AdaptednessError(f"xi is not part of the {self._ens.model.kind} filtration")
        return self._ens.xi

    def _check(self, k):
        if k > self.j:
            raise AdaptednessError(
                f"builder at knot {self.j} tried to read knot {k}: not yet revealed")
        if k < 0:
            raise IndexError(k)

    def w_at(self, k):
        self._check(k)
        return self._ens.w[:, k]

    def wp_at(self, k):
        self._check(k)
        if not self._ens.model.has_auxiliary:
            raise AdaptednessError(f"w' is not part of the {self._ens.model.kind} filtration")
        return self._ens.wp[:, k]

    def t_at(self, k):
        self._check(k)
        return float(self._ens.grid.knots[k])

    def coordinates(self):
        return self._ens.coordinates(self.j)

    def coordinate_names(self):
        return self._ens.model.coordinate_names()


# ----------------------------------------------------------- processes


def as_paths(x, N, name="value"):
    """Coerce per-path data to shape (N, n)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = np.full((N, 1), float(a))
    elif a.ndim == 1:
        if a.shape[0] != N:
            raise DimensionError(f"{name}: expected {N} paths, got {a.shape[0]}")
        a = a[:, None]
    elif a.ndim != 2 or a.shape[0] != N:
        raise DimensionError(f"{name}: expected shape (N,) or (N, n), got {a.shape}")
    return a


def squeeze_paths(a):
    return a[:, 0] if a.shape[1] == 1 else a


class AdaptedProcess:
    """Per-path, per-knot values adapted to an ensemble's filtration.

    Construct through :meth:`build` (or the helpers built on it): the
    builder sees only the :class:`InformationState` at each knot.  The plain
    constructor wraps arrays computed by the package's own adapted
    operations and is not meant for user data.
    """

    __slots__ = ("ensemble", "values")

    def __init__(self, ensemble, values):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[:2] != (ensemble.N, ensemble.J + 1):
            raise DimensionError(
                f"process values must have shape (N, J+1[, n]) = ({ensemble.N}, {ensemble.J + 1}), got {v.shape}")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        self.ensemble = ensemble
        self.values = v

    # -- builders
    @classmethod
    def build(cls, ensemble, fn, dim=None):
        """Evaluate ``fn(state)`` at every knot; ``fn`` returns (N,), (N, n) or a scalar."""
        N, J = ensemble.N, ensemble.J
        cols = []
        for j in range(J + 1):
            cols.append(as_paths(fn(ensemble.state(j)), N, name=f"builder output at knot {j}"))
        n = cols[0].shape[1]
        if dim is not None and n != dim:
            raise DimensionError(f"builder returned dimension {n}, expected {dim}")
        if any(c.shape[1] != n for c in cols):
            raise DimensionError("builder dimension changes across knots")
        return cls(ensemble, np.stack(cols, axis=1))

    @classmethod
    def constant(cls, ensemble, c, dim=None):
        c = np.atleast_1d(np.asarray(c, dtype=np.float64))
        if dim is not None and c.size == 1:
            c = np.repeat(c, dim)
        v = np.broadcast_to(c, (ensemble.N, ensemble.J + 1, c.size))
        return cls(ensemble, v)

    @classmethod
    def zeros(cls, ensemble, dim=1):
        return cls(ensemble, np.zeros((ensemble.N, ensemble.J + 1, dim)))

    @classmethod
    def deterministic(cls, ensemble, g):
        """Process ``g(t_j)``, identical on every path."""
        vals = np.array([np.atleast_1d(g(t)) for t in ensemble.grid.knots], dtype=np.float64)
        return cls(ensemble, np.broadcast_to(vals, (ensemble.N,) + vals.shape))

    @classmethod
    def brownian(cls, ensemble, channel="w"):
        """The driving path ``w`` (or ``w'`` for ``channel="w'"``) as a process."""
        if channel == "w":
            return cls(ensemble, ensemble.w)
        if channel in ("w'", "wp"):
            if ensemble.wp is None:
                raise AdaptednessError(f"w' is not part of the {ensemble.model.kind} filtration")
            return cls(ensemble, ensemble.wp)
        raise ConfigurationError(f"unknown channel {channel!r}")

    # -- shape
    @property
    def dim(self):
        return self.values.shape[2]

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def J(self):
        return self.values.shape[1] - 1

    def at(self, j):
        """Values at knot ``j`` as per-path data."""
        return squeeze_paths(self.values[:, j])

    def masked(self, j0, j1=None):
        """Copy that is zero outside knots ``j0 <= j < j1`` (``j1`` defaults to J + 1)."""
        j1 = self.J + 1 if j1 is None else j1
        v = np.zeros_like(self.values)
        v[:, j0:j1] = self.values[:, j0:j1]
        return AdaptedProcess(self.ensemble, v)

    def with_values(self, values):
        return AdaptedProcess(self.ensemble, values)

    # -- arithmetic (adapted processes form an algebra)
    def _other(self, other):
        if isinstance(other, AdaptedProcess):
            if other.ensemble is not self.ensemble and not other.ensemble.same_scenarios(self.ensemble):
                raise DimensionError("processes live on different ensembles")
            return other.values
        return np.asarray(other, dtype=np.float64)

    def __add__(self, other):
        return AdaptedProcess(self.ensemble, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return AdaptedProcess(self.ensemble, self.values - self._other(other))

    def __rsub__(self, other):
        return AdaptedProcess(self.ensemble, self._other(other) - self.values)

    def __mul__(self, other):
        return AdaptedProcess(self.ensemble, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return AdaptedProcess(self.ensemble, -self.values)

    def __repr__(self):
        return f"AdaptedProcess(N={self.N}, J={self.J}, dim={self.dim})"


def _check_same(v, ens):
    if ens is not None and v.ensemble is not ens and not v.ensemble.same_scenarios(ens):
        raise DimensionError("process and ensemble do not match")


def ito_integral(v, upTo=None, ens=None):
    """``sum_{j < upTo} v[j] * dw[j]`` per path (left-endpoint Ito sum)."""
    _check_same(v, ens)
    ens = v.ensemble
    upTo = ens.J if upTo is None else upTo
    if not 0 <= upTo <= ens.J:
        raise IndexError(f"knot {upTo} outside 0..{ens.J}")
    incr = v.values[:, :upTo] * ens.dw[:, :upTo, None]
    return squeeze_paths(kernels.forward_cumsum(incr)[:, -1])


def ito_process(v):
    """Running Ito integral ``int_0^{t_j} v dw`` as an adapted process."""
    ens = v.ensemble
    incr = v.values[:, :-1] * ens.dw[:, :, None]
    return AdaptedProcess(ens, kernels.forward_cumsum(incr))


def time_integral(u, j0=0, j1=None):
    """Left Riemann sum ``sum_{j0 <= j < j1} u[j] * dt[j]`` per path."""
    J = u.J
    j1 = J if j1 is None else j1
    if not (0 <= j0 <= j1 <= J):
        raise IndexError(f"invalid knot range [{j0}, {j1}] for J={J}")
    dt = u.ensemble.grid.dt
    incr = u.values[:, j0:j1] * dt[None, j0:j1, None]
    return squeeze_paths(kernels.forward_cumsum(incr)[:, -1])


def time_integral_process(u):
    """Running ``int_0^{t_j} u ds`` (left endpoint) as an adapted process."""
    dt = u.ensemble.grid.dt
    return AdaptedProcess(u.ensemble, kernels.forward_cumsum(u.values[:, :-1] * dt[None, :, None]))


def tail_integral(u, j1=None):
    """``out[:, j] = sum_{j <= k < j1} u[k] dt[k]`` for ``j <= j1``; shape (N, J + 1, n).

    Entries after ``j1`` are zero.
    """
    J = u.J
    j1 = J if j1 is None else j1
    dt = u.ensemble.grid.dt
    out = np.zeros_like(u.values)
    out[:, : j1 + 1] = kernels.backward_cumsum(u.values[:, :j1] * dt[None, :j1, None])
    return out


# ----------------------------------------------------------------- norms


def _sq(values):
    return np.sum(values * values, axis=-1)


def rms(x):
    """``sqrt(E|x|^2)`` of per-path data."""
    a = np.asarray(x, dtype=np.float64)
    a = a[:, None] if a.ndim == 1 else a
    return float(np.sqrt(kernels.pairwise_mean(_sq(a))))


def sup_l2_norm(x, j0=0, j1=None):
    """``sqrt(mean_i max_j |x[i, j]|^2)`` over knots ``j0..j1`` inclusive."""
    j1 = x.J if j1 is None else j1
    sq = _sq(x.values[:, j0 : j1 + 1])
    return float(np.sqrt(kernels.pairwise_mean(sq.max(axis=1))))


def l2_l2_norm(x, j0=0, j1=None):
    """``sqrt(mean_i sum_{j0 <= j < j1} |x[i, j]|^2 dt_j)``."""
    j1 = x.J if j1 is None else j1
    dt = x.ensemble.grid.dt
    sq = _sq(x.values[:, j0:j1]) * dt[None, j0:j1]
    per_path = kernels.forward_cumsum(sq)[:, -1]
    return float(np.sqrt(kernels.pairwise_mean(per_path)))


def l2_l1_norm(x, j0=0, j1=None):
    """``sqrt(mean_i (sum_{j0 <= j < j1} |x[i, j]| dt_j)^2)``, the L2(L1) norm."""
    j1 = x.J if j1 is None else j1
    dt = x.ensemble.grid.dt
    a = np.sqrt(_sq(x.values[:, j0:j1])) * dt[None, j0:j1]
    per_path = kernels.forward_cumsum(a)[:, -1]
    return float(np.sqrt(kernels.pairwise_mean(per_path * per_path)))


def mean_and_se(samples):
    """Pairwise mean and standard error of per-path samples."""
    s = np.asarray(samples, dtype=np.float64)
    N = s.shape[0]
    m = float(kernels.pairwise_mean(s))
    if N < 2:
        return m, float("inf")
    d = s - m
    var = float(kernels.pairwise_colsum((d * d)[:, None])[0]) / (N - 1)
    return m, float(np.sqrt(var / N))
